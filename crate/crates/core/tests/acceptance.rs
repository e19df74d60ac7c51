//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use unitychain::chain::{
    validate_epoch_block, validate_epoch_genesis, BlockHash, EpochBlock, EpochGenesisBlock, Rejection, ShufflePolicy,
    SignatureDefect, StrandId, StrandTip,
};
use unitychain::crypto::{
    aggregate, sign_with_share, AggregateSignature, Dealing, DkgRitual, FieldElement, GroupElement, GroupParams,
    OracleRegistry, RitualId,
};
use unitychain::metrics::{
    build_report, coalition_control_probability, compute_downtime, compute_shuffle_entropy, informed_coalition,
    parse_scenario, uniform_kendall_moments, RunLog,
};
use unitychain::sim::{run_simulation, ChurnAction, ChurnSpec, FaultKind, FaultSpec, Scenario, Simulation};
use unitychain::topology::{majority_threshold, KeyPredicate, KeyRange, KeyRangePartition, NodeId, PartitionMode};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn regression_suite() -> Vec<(String, Scenario)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let s = parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, s)
        })
        .collect()
}

fn run_log(s: &Scenario, seed: u64) -> (String, RunLog) {
    let out = run_simulation(s, seed).expect("scenario runs");
    let text = out.log_text();
    let log = RunLog::parse(&text).expect("log parses");
    (text, log)
}

// ---- 1 ----

fn zero_downtime() -> Outcome {
    let mut grid = Vec::new();
    for n in [4, 8, 16, 32] {
        for cpe in [5, 10] {
            for rd in [1, 3, 5] {
                grid.push((n, cpe, rd));
            }
        }
    }
    let results: Vec<(usize, u64, u64, u64, usize, usize)> = grid
        .par_iter()
        .map(|&(n, cpe, rd)| {
            let s = Scenario {
                node_count: n,
                cycles_per_epoch: cpe,
                reshuffle_duration: rd,
                horizon: 500,
                ..Scenario::default()
            };
            let (_, log) = run_log(&s, 1000 + n as u64);
            (n, cpe, rd, compute_downtime(&log), log.epochs.len(), log.violations.len())
        })
        .collect();
    for &(n, cpe, rd, down, epochs, violations) in &results {
        ensure(down == 0 && violations == 0 && epochs > 0, || {
            format!("n={n} cpe={cpe} rd={rd}: downtime {down}, epochs {epochs}, violations {violations}")
        })?;
    }
    let epochs: usize = results.iter().map(|r| r.4).sum();
    Ok(format!("{} runs of 500 cycles, downtime 0 in all, {epochs} epochs total", results.len()))
}

// ---- 2 ----

fn determinism() -> Outcome {
    let suite = regression_suite();
    for (name, s) in &suite {
        let seed = s.seed.unwrap_or(0);
        let (a, log_a) = run_log(s, seed);
        let (b, log_b) = run_log(s, seed);
        ensure(a == b, || format!("{name}: logs differ between runs"))?;
        let ra = build_report(&log_a, Some(&[0])).unwrap();
        let rb = build_report(&log_b, Some(&[0])).unwrap();
        ensure(ra.csv() == rb.csv() && ra.summary_toml() == rb.summary_toml(), || format!("{name}: reports differ"))?;
        // replay: everything needed is in the header
        let (replayed, _) = run_log(&log_a.scenario, log_a.seed);
        ensure(replayed == a, || format!("{name}: replay from header differs"))?;
    }
    Ok(format!("{} scenarios: logs, reports and replays byte-identical", suite.len()))
}

// ---- 3 ----

struct EpochCase {
    block: EpochBlock,
    prior: Option<EpochBlock>,
    tips: BTreeMap<StrandId, StrandTip>,
}

struct GenesisCase {
    block: EpochGenesisBlock,
    parent: EpochBlock,
    tips: BTreeMap<StrandId, StrandTip>,
}

fn honest_blocks(seed: u64) -> (Vec<EpochCase>, Vec<GenesisCase>, OracleRegistry) {
    let s = Scenario { node_count: 7, horizon: 150, ..Scenario::default() };
    let mut sim = Simulation::new(&s, seed).unwrap();
    sim.run_to_horizon();
    let e = &sim.engines()[sim.reference_node().unwrap()];
    let by_hash: BTreeMap<BlockHash, StrandTip> =
        StrandId::ALL.iter().flat_map(|s| e.chain(*s).iter()).map(|b| (b.hash(), StrandTip::of(b))).collect();
    let tips_of = |eb: &EpochBlock| -> BTreeMap<StrandId, StrandTip> {
        eb.header.parent_hashes.iter().map(|(s, h)| (*s, by_hash[h].clone())).collect()
    };
    let epochs: Vec<EpochCase> = e
        .epochs()
        .iter()
        .enumerate()
        .map(|(i, eb)| EpochCase {
            block: (**eb).clone(),
            prior: i.checked_sub(1).map(|j| (*e.epochs()[j]).clone()),
            tips: tips_of(eb),
        })
        .collect();
    let geneses: Vec<GenesisCase> = e
        .geneses()
        .iter()
        .map(|g| {
            let parent = e.epochs().iter().find(|eb| eb.header.height == g.header.epoch).unwrap();
            GenesisCase { block: (**g).clone(), parent: (**parent).clone(), tips: tips_of(parent) }
        })
        .collect();
    (epochs, geneses, sim.registry().clone())
}

fn shrink(sig: &mut AggregateSignature, keep: usize) {
    sig.signer_set = sig.signer_set.iter().copied().take(keep).collect();
}

fn fresh_nodes(count: usize, from: u32) -> Vec<NodeId> {
    (from..from + count as u32).map(|i| NodeId::derive(i, &GroupParams::default())).collect()
}

/// Keeps `keep` of `prior` and fills up to the old size with fresh nodes.
fn turnover(prior: &[NodeId], keep: usize) -> Vec<NodeId> {
    let mut next: Vec<NodeId> = prior.iter().copied().take(keep).collect();
    next.extend(fresh_nodes(prior.len() - keep, 5000));
    next.sort();
    next
}

fn corrupt_epoch(c: &EpochCase, rng: &mut ChaCha20Rng) -> (EpochBlock, fn(&Rejection) -> bool, &'static str) {
    let mut b = c.block.clone();
    let need = c.tips[&b.header.ascending].signing.majority().min(c.tips[&b.header.descending].signing.majority());
    let pick = rng.next_u32() % 10;
    match pick {
        0 => {
            b.ascending_signature.signer_set.clear();
            (b, |r| matches!(r, Rejection::BadAscendingSignature(SignatureDefect::Missing)), "dropped ascending")
        }
        1 => {
            b.descending_signature.signer_set.clear();
            (b, |r| matches!(r, Rejection::BadDescendingSignature(SignatureDefect::Missing)), "dropped descending")
        }
        2 => {
            let keep = 1 + rng.next_u32() as usize % (need - 1);
            shrink(&mut b.ascending_signature, keep);
            (
                b,
                |r| matches!(r, Rejection::BadAscendingSignature(SignatureDefect::SubMajority { .. })),
                "sub-majority ascending",
            )
        }
        3 => {
            let keep = 1 + rng.next_u32() as usize % (need - 1);
            shrink(&mut b.descending_signature, keep);
            (
                b,
                |r| matches!(r, Rejection::BadDescendingSignature(SignatureDefect::SubMajority { .. })),
                "sub-majority descending",
            )
        }
        4 => {
            std::mem::swap(&mut b.header.ascending, &mut b.header.descending);
            (b, |r| matches!(r, Rejection::WrongAlternation), "broken alternation")
        }
        5 => {
            b.header.responsibilities = if rng.next_u32().is_multiple_of(2) {
                KeyRangePartition::parity()
            } else {
                KeyRangePartition::ranges([(b.header.ascending, vec![KeyRange { start: 0, end: u64::MAX / 2 }])])
            };
            (b, |r| matches!(r, Rejection::IncompleteResponsibility), "partition gap")
        }
        6 => {
            let prior: Vec<NodeId> = c.tips[&b.header.ascending].signing.member_set().into_iter().collect();
            let need = majority_threshold(prior.len()).unwrap();
            let keep = rng.next_u32() as usize % need;
            b.header.next_members = turnover(&prior, keep);
            (b, |r| matches!(r, Rejection::CarryoverViolation { .. }), "carryover violation")
        }
        7 => {
            b.ascending_signature.signer_set.insert(fresh_nodes(1, 9000)[0]);
            (b, |r| matches!(r, Rejection::BadAscendingSignature(SignatureDefect::ForeignSigner)), "foreign signer")
        }
        8 => {
            b.header.cycle += 1 + rng.next_u64() % 5;
            (b, |r| matches!(r, Rejection::BadAscendingSignature(SignatureDefect::Invalid)), "altered header")
        }
        _ => {
            let v = b.ascending_signature.value.value();
            b.ascending_signature.value = GroupElement::from_raw(v ^ 1);
            (b, |r| matches!(r, Rejection::BadAscendingSignature(SignatureDefect::Invalid)), "forged value")
        }
    }
}

fn corrupt_genesis(
    c: &GenesisCase,
    other_parent: &EpochBlock,
    rng: &mut ChaCha20Rng,
) -> (EpochGenesisBlock, EpochBlock, fn(&Rejection) -> bool, &'static str) {
    let mut b = c.block.clone();
    let mut parent = c.parent.clone();
    let need = StrandId::ALL.iter().map(|s| c.tips[s].signing.majority()).min().unwrap();
    let pick = rng.next_u32() % 10;
    let (verdict, what): (fn(&Rejection) -> bool, &'static str) = match pick {
        0 => {
            b.submissive_signature.signer_set.clear();
            (|r| matches!(r, Rejection::BadSubmissiveSignature(SignatureDefect::Missing)), "dropped submissive")
        }
        1 => {
            b.dominant_signature.signer_set.clear();
            (|r| matches!(r, Rejection::BadDominantSignature(SignatureDefect::Missing)), "dropped dominant")
        }
        2 => {
            shrink(&mut b.submissive_signature, 1 + rng.next_u32() as usize % (need - 1));
            (
                |r| matches!(r, Rejection::BadSubmissiveSignature(SignatureDefect::SubMajority { .. })),
                "sub-majority submissive",
            )
        }
        3 => {
            shrink(&mut b.dominant_signature, 1 + rng.next_u32() as usize % (need - 1));
            (
                |r| matches!(r, Rejection::BadDominantSignature(SignatureDefect::SubMajority { .. })),
                "sub-majority dominant",
            )
        }
        4 => {
            let split = 1 + rng.next_u64() % (u64::MAX / 2);
            let gap = 1 + rng.next_u64() % 1000;
            b.header.partition = KeyRangePartition::ranges([
                (StrandId::Positive, vec![KeyRange { start: 0, end: split - 1 }]),
                (StrandId::Negative, vec![KeyRange { start: split + gap, end: u64::MAX }]),
            ]);
            (|r| matches!(r, Rejection::PartitionGap(_)), "partition gap")
        }
        5 => {
            b.header.partition = KeyRangePartition::from_assignments([
                (StrandId::Positive, KeyPredicate::All),
                (StrandId::Negative, KeyPredicate::Odd),
            ]);
            (|r| matches!(r, Rejection::PartitionOverlap(_)), "partition overlap")
        }
        6 => {
            let prior: Vec<NodeId> = c.tips[&c.parent.header.ascending].signing.member_set().into_iter().collect();
            let need = majority_threshold(prior.len()).unwrap();
            let next = turnover(&prior, rng.next_u32() as usize % need);
            for cfg in b.header.new_configurations.values_mut() {
                cfg.ordered_members = next.clone();
            }
            (|r| matches!(r, Rejection::CarryoverViolation { .. }), "carryover violation")
        }
        7 => {
            b.header.cycle += 1 + rng.next_u64() % 5;
            (|r| matches!(r, Rejection::BadSubmissiveSignature(SignatureDefect::Invalid)), "altered header")
        }
        8 => {
            parent = other_parent.clone();
            (|r| matches!(r, Rejection::BadParent), "wrong parent epoch")
        }
        _ => {
            let cfg = b.header.new_configurations.get_mut(&StrandId::Negative).unwrap();
            cfg.ordered_members.pop();
            (|r| matches!(r, Rejection::MembershipMismatch), "configurations disagree")
        }
    };
    (b, parent, verdict, what)
}

fn dual_majority_safety() -> Outcome {
    let fixtures: Vec<_> = (0..4u64).map(|seed| honest_blocks(40 + seed)).collect();
    let mut honest = 0;
    for (epochs, geneses, registry) in &fixtures {
        for c in epochs {
            validate_epoch_block(&c.block, &c.tips, c.prior.as_ref(), registry)
                .map_err(|e| format!("honest epoch block {} rejected: {e}", c.block.header.height))?;
            honest += 1;
        }
        for c in geneses {
            validate_epoch_genesis(&c.block, &c.parent, &c.tips, registry)
                .map_err(|e| format!("honest genesis {} rejected: {e}", c.block.header.epoch))?;
            honest += 1;
        }
    }
    ensure(honest >= 100, || format!("only {honest} honest blocks generated"))?;

    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..1000 {
        let (epochs, geneses, registry) = &fixtures[i % fixtures.len()];
        let verdict = if rng.next_u32() % 2 == 0 {
            let c = &epochs[rng.next_u32() as usize % epochs.len()];
            let (b, ok, what) = corrupt_epoch(c, &mut rng);
            *kinds.entry(what).or_default() += 1;
            match validate_epoch_block(&b, &c.tips, c.prior.as_ref(), registry) {
                Err(r) if ok(&r) => Ok(()),
                other => Err(format!("corrupted epoch block ({what}) gave {other:?}")),
            }
        } else {
            let k = rng.next_u32() as usize % geneses.len();
            let c = &geneses[k];
            let other = &geneses[(k + 1) % geneses.len()].parent;
            let (b, parent, ok, what) = corrupt_genesis(c, other, &mut rng);
            *kinds.entry(what).or_default() += 1;
            match validate_epoch_genesis(&b, &parent, &c.tips, registry) {
                Err(r) if ok(&r) => Ok(()),
                other => Err(format!("corrupted genesis ({what}) gave {other:?}")),
            }
        };
        verdict?;
    }
    Ok(format!(
        "{honest} honest blocks accepted, 1000 corrupted blocks over {} defect kinds rejected with the expected reason",
        kinds.len()
    ))
}

// ---- 4 ----

fn threshold_uniqueness() -> Outcome {
    let p = GroupParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for n in [4usize, 7, 10] {
        let members = fresh_nodes(n, 0);
        let t = majority_threshold(n).unwrap();
        let ritual = DkgRitual::new(p, RitualId::strand(1, StrandId::Positive, 0), &members, t).unwrap();
        let mut dealings: Vec<Dealing> = Vec::new();
        let mut secrets: BTreeMap<NodeId, FieldElement> = BTreeMap::new();
        for m in ritual.participants() {
            let (d, s) = ritual.deal(*m, &mut rng);
            dealings.push(d);
            secrets.insert(*m, s);
        }
        // one dealer sends a bad share to one recipient
        let cheat = ritual.participants()[rng.next_u32() as usize % n];
        let victim = *ritual.participants().iter().find(|m| **m != cheat).unwrap();
        let d = dealings.iter_mut().find(|d| d.commitment.dealer == cheat).unwrap();
        let share = d.shares.get_mut(&victim).unwrap();
        share.value = p.add(share.value, p.scalar(1));

        // every participant finishes on its own
        let results: Vec<_> = ritual.participants().iter().map(|_| ritual.finish(&dealings)).collect();
        let first = results[0].as_ref().map_err(|e| format!("n={n}: ritual failed: {e}"))?;
        ensure(!first.qualified.contains(&cheat) && first.qualified.len() == n - 1, || {
            format!("n={n}: corrupted dealer not excluded")
        })?;
        for r in &results {
            let r = r.as_ref().map_err(|e| e.to_string())?;
            ensure(r.group_public_key == first.group_public_key, || format!("n={n}: public keys disagree"))?;
        }
        let secret = first.qualified.iter().fold(FieldElement::ZERO, |acc, q| p.add(acc, secrets[q]));
        ensure(p.commit(secret) == first.group_public_key, || format!("n={n}: key is not g^(sum of QUAL secrets)"))?;

        let message = format!("block for n={n}");
        let oracle = p.exp(p.hash_to_group(message.as_bytes()), secret);
        let shares: Vec<_> =
            first.member_shares.iter().map(|(id, s)| sign_with_share(&p, *id, s, message.as_bytes())).collect();
        for _ in 0..100 {
            let mut pool = shares.clone();
            let mut subset = Vec::new();
            while subset.len() < t {
                subset.push(pool.swap_remove(rng.next_u32() as usize % pool.len()));
            }
            let agg = aggregate(&p, &subset, t).map_err(|e| e.to_string())?;
            ensure(agg.value == oracle, || format!("n={n}: aggregate differs from H(m)^x"))?;
        }
    }
    Ok("n in {4, 7, 10}: 300 random t-subsets equal the oracle, keys agree, bad dealer excluded".into())
}

// ---- 5 ----

fn churn_scenario(rng: &mut ChaCha20Rng) -> Scenario {
    let n = 10u32;
    let mut s = Scenario {
        node_count: n as usize,
        cycles_per_epoch: 6,
        reshuffle_duration: 2,
        join_threshold: 3,
        horizon: 160,
        ..Scenario::default()
    };
    let mut members: Vec<u32> = (0..n).collect();
    let mut next_joiner = n;
    for round in 0..4u64 {
        let cycle = 1 + round * 8 + rng.next_u64() % 4;
        let joins = rng.next_u32() % 7;
        for _ in 0..joins {
            s.churn.push(ChurnSpec { cycle, node: next_joiner, action: ChurnAction::Join });
            next_joiner += 1;
        }
        // total membership never has to fall below five
        let size = members.len() + (next_joiner - n) as usize;
        let room = (size * 9 / 10).min(size.saturating_sub(5)).min(members.len());
        if room == 0 {
            continue;
        }
        let leaves = 1 + rng.next_u32() as usize % room;
        for _ in 0..leaves {
            let node = members.swap_remove(rng.next_u32() as usize % members.len());
            s.churn.push(ChurnSpec { cycle, node, action: ChurnAction::Leave });
        }
    }
    s
}

fn carryover() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut deferred_epochs = 0;
    for trial in 0..4 {
        let s = churn_scenario(&mut rng);
        let (_, log) = run_log(&s, 50 + trial);
        ensure(log.violations.is_empty(), || format!("trial {trial}: {:?}", log.violations))?;
        let mut prior: BTreeSet<u32> = (0..s.node_count as u32).collect();
        for g in &log.geneses {
            let next: BTreeSet<u32> = g.configurations.values().next().unwrap().iter().copied().collect();
            let need = majority_threshold(prior.len()).unwrap();
            let kept = prior.intersection(&next).count();
            ensure(kept >= need, || format!("trial {trial} epoch {}: kept {kept} < {need}", g.epoch))?;
            let epoch_cycle = log.epochs.iter().find(|e| e.height == g.epoch).map_or(0, |e| e.cycle);
            let outstanding = s.churn.iter().filter(|c| c.cycle < epoch_cycle).any(|c| match c.action {
                ChurnAction::Join => !next.contains(&c.node),
                ChurnAction::Leave => next.contains(&c.node),
            });
            if outstanding {
                deferred_epochs += 1;
            }
            prior = next;
            checked += 1;
        }
        // after the quiet tail every request has been applied
        for c in &s.churn {
            let present = prior.contains(&c.node);
            let applied = match c.action {
                ChurnAction::Join => present,
                ChurnAction::Leave => !present,
            };
            ensure(applied, || format!("trial {trial}: {:?} of node {} was dropped", c.action, c.node))?;
        }
    }
    ensure(deferred_epochs > 0, || "no churn was ever deferred; schedules are too mild".into())?;
    Ok(format!("{checked} geneses keep a majority of the prior membership; {deferred_epochs} deferred excess churn, none dropped"))
}

// ---- 6 ----

fn partition_totality() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut probes: Vec<u64> = (0..10_000).map(|_| rng.next_u64()).collect();
    probes.extend([0, 1, u64::MAX, u64::MAX / 2, u64::MAX / 2 + 1]);
    let mut runs: Vec<(String, Scenario)> = regression_suite();
    runs.push(("n16".into(), Scenario { node_count: 16, horizon: 120, cycles_per_epoch: 5, ..Scenario::default() }));
    let mut cycles = 0;
    for (name, s) in &runs {
        let (_, log) = run_log(s, s.seed.unwrap_or(0));
        for view in &log.cycles {
            let epoch = log.epochs.iter().rfind(|e| e.cycle < view.cycle);
            let converged = epoch.filter(|e| !log.geneses.iter().any(|g| g.epoch == e.height && g.cycle < view.cycle));
            for &k in &probes {
                let owners = view.partition.claimants(k);
                ensure(owners.len() == 1, || format!("{name} cycle {}: key {k} has owners {owners:?}", view.cycle))?;
                if let Some(e) = converged {
                    ensure(owners[0] == e.ascending, || {
                        format!("{name} cycle {}: key {k} not routed to the dominant strand", view.cycle)
                    })?;
                }
            }
            match (converged, view.mode) {
                (Some(e), PartitionMode::FullKeyspace(s)) if s == e.ascending => {}
                (None, PartitionMode::Parity | PartitionMode::Ranges) => {}
                (c, m) => {
                    return Err(format!("{name} cycle {}: mode {m:?} with epoch {:?}", view.cycle, c.map(|e| e.height)))
                }
            }
            cycles += 1;
        }
    }
    Ok(format!("{cycles} cycles over {} runs, {} probe keys each map to exactly one strand", runs.len(), probes.len()))
}

// ---- 7 ----

fn shuffle_statistics() -> Outcome {
    let s = Scenario { node_count: 10, horizon: 300, coalition: vec![0, 1, 2], ..Scenario::default() };
    let (_, log) = run_log(&s, 77);
    let e = compute_shuffle_entropy(&log);
    let (mu, var) = uniform_kendall_moments(10);
    let m = e.samples.len() as f64;
    let mean = e.mean.unwrap();
    let sigma = (var / m).sqrt();
    ensure((mean - mu).abs() <= 5.0 * sigma, || {
        format!("mean Kendall tau {mean:.4} vs {mu} (5 sigma = {:.4})", 5.0 * sigma)
    })?;

    let c = coalition_control_probability(&log, &s.coalition).unwrap();
    ensure(c.leader_observations >= 400, || format!("only {} observed leader slots", c.leader_observations))?;
    let obs = c.leader_observations as f64;
    let sigma_c = (0.3 * 0.7 / obs).sqrt();
    ensure((c.leader_capture_rate - 0.3).abs() <= 5.0 * sigma_c, || {
        format!("leader capture {:.4} vs 0.30 (5 sigma = {:.4})", c.leader_capture_rate, 5.0 * sigma_c)
    })?;
    Ok(format!(
        "Kendall tau mean {mean:.4} over {} samples (expect {mu}, sigma {sigma:.4}); leader capture {:.4} over {} slots",
        e.samples.len(),
        c.leader_capture_rate,
        c.leader_observations
    ))
}

// ---- 8 ----

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn security_monotonicity() -> Outcome {
    let policies = [
        ("never", ShufflePolicy::Never),
        ("every 5 epochs", ShufflePolicy::EveryEpochs(5)),
        ("every epoch", ShufflePolicy::EveryEpochs(1)),
    ];
    let mut medians = Vec::new();
    for (name, policy) in policies {
        let streaks: Vec<u64> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let s = Scenario { node_count: 10, horizon: 200, topology_shuffle: policy, ..Scenario::default() };
                let (_, log) = run_log(&s, 800 + seed);
                let coalition = informed_coalition(&log.initial, 3);
                coalition_control_probability(&log, &coalition).unwrap().max_leader_streak
            })
            .collect();
        medians.push((name, median(streaks)));
    }
    let text: Vec<String> = medians.iter().map(|(n, m)| format!("{n}: {m}")).collect();
    ensure(medians.windows(2).all(|w| w[0].1 >= w[1].1), || {
        format!("streaks not non-increasing: {}", text.join(", "))
    })?;
    Ok(format!("median max coalition leader streak {}", text.join(", ")))
}

// ---- 9 ----

fn liveness_limit() -> Outcome {
    let base = Scenario { node_count: 8, horizon: 40, ..Scenario::default() };
    let (_, honest) = run_log(&base, 9);
    ensure(compute_downtime(&honest) == 0, || "baseline run already has downtime".into())?;
    let epoch = honest.epochs.first().ok_or("no epoch in baseline")?;
    let genesis = honest.geneses.first().ok_or("no genesis in baseline")?;
    let mid = (epoch.cycle + genesis.cycle).div_ceil(2);
    let dominant = &honest.initial[&epoch.ascending];
    let silent: Vec<u32> = dominant.iter().copied().take(dominant.len() / 2).collect();
    let mut s = base.clone();
    s.faults = silent
        .iter()
        .map(|&node| FaultSpec { node, kind: FaultKind::Silent, from_cycle: mid, until_cycle: None })
        .collect();
    let (_, log) = run_log(&s, 9);
    let down = compute_downtime(&log);
    ensure(down > 0, || format!("{} silent of {} gave no downtime", silent.len(), dominant.len()))?;
    ensure(log.violations.is_empty(), || format!("safety broke: {:?}", log.violations))?;
    Ok(format!(
        "{} of {} dominant members silent from cycle {mid}: downtime {down} cycles, no safety violation",
        silent.len(),
        dominant.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("zero downtime on honest runs", zero_downtime),
        ("determinism and replay", determinism),
        ("dual-majority safety", dual_majority_safety),
        ("threshold signature uniqueness and DKG agreement", threshold_uniqueness),
        ("carryover enforcement", carryover),
        ("partition totality", partition_totality),
        ("shuffle statistics", shuffle_statistics),
        ("security monotonicity", security_monotonicity),
        ("liveness limit", liveness_limit),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
