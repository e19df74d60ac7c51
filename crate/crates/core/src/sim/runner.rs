use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::invariants::check_invariants;
use super::log::{encode_record, CycleBlockRecord, EpochBlockRecord, GenesisBlockRecord, LogRecord, TxEntry};
use super::scenario::{ChurnAction, FaultKind, Scenario};
use super::workload::generate_batch;
use crate::chain::{build_origin_block, BlockHash, Bootstrap, OriginBlock, ProtocolParams, StrandId};
use crate::crypto::{
    aggregate, derive_vrf_seed, run_dkg, sign_share, AggregateSignature, GroupParams, OracleRegistry, RitualId, VrfSeed,
};
use crate::digest::sha256;
use crate::engine::{
    Behavior, EngineCtx, EngineEvent, NodeEngine, NodeSetup, NodeStatus, Outgoing, ProtocolMessage, Recipient,
};
use crate::topology::{majority_threshold, shuffle_members, GroupKeyRef, NetworkConfiguration, NodeId};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("setup failed: {0}")]
    Setup(String),
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub seed: u64,
    /// JSON lines, without trailing newlines.
    pub log: Vec<String>,
    pub violations: Vec<String>,
}

impl SimOutcome {
    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }
}

enum Payload {
    CycleStart(u64),
    MidCycle(u64),
    Deliver { to: usize, from: NodeId, msg: Arc<ProtocolMessage> },
    Crash(usize),
}

struct Scheduled {
    at: u64,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

fn stream(seed: u64, label: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(sha256(&[b"unitychain/sim", &seed.to_be_bytes(), label]))
}

/// Origin key shares of each node, by ritual.
pub type OriginShares = BTreeMap<NodeId, BTreeMap<RitualId, crate::crypto::SecretShare>>;

/// Derives the per-strand split of the origin membership.
pub fn initial_configurations(
    group: &GroupParams,
    origin: &OriginBlock,
    registry: &mut OracleRegistry,
    rng: &mut ChaCha20Rng,
) -> Result<(BTreeMap<StrandId, NetworkConfiguration>, OriginShares), String> {
    let members = &origin.members;
    let t = majority_threshold(members.len()).map_err(|e| e.to_string())?;
    let mut keys: BTreeMap<NodeId, BTreeMap<RitualId, crate::crypto::SecretShare>> = BTreeMap::new();
    let bootstrap = origin.bootstrap.as_ref().ok_or("origin has no bootstrap signature")?;
    let split = derive_vrf_seed(&bootstrap.signature);
    let mut configs = BTreeMap::new();
    for s in StrandId::ALL {
        let ritual = RitualId::strand(0, s, 0);
        let material = run_dkg(group, ritual, members, t, rng).map_err(|e| e.to_string())?;
        registry.register(&material).map_err(|e| e.to_string())?;
        for (node, share) in &material.member_shares {
            keys.entry(*node).or_default().insert(ritual, *share);
        }
        let seed = VrfSeed(sha256(&[b"unitychain/split", &split.0, &[s.tag()]]));
        configs.insert(
            s,
            NetworkConfiguration {
                strand: s,
                ordered_members: shuffle_members(members, &seed),
                group_key: GroupKeyRef { ritual, public_key: material.group_public_key, threshold: t },
                responsibility: origin.params.diverged_partition.assignments[&s].clone(),
            },
        );
    }
    Ok((configs, keys))
}

/// Builds and bootstraps the origin block: a DKG among the members and their
/// majority signature over the origin hash.
pub fn bootstrap_origin(
    group: &GroupParams,
    members: &[NodeId],
    params: ProtocolParams,
    registry: &mut OracleRegistry,
    rng: &mut ChaCha20Rng,
) -> Result<(OriginBlock, BTreeMap<NodeId, crate::crypto::SecretShare>), String> {
    let mut origin = build_origin_block(members, params).map_err(|e| e.to_string())?;
    let t = majority_threshold(members.len()).map_err(|e| e.to_string())?;
    let material = run_dkg(group, RitualId::origin(), members, t, rng).map_err(|e| e.to_string())?;
    registry.register(&material).map_err(|e| e.to_string())?;
    let hash = origin.hash();
    let shares: Vec<_> = members
        .iter()
        .take(t)
        .map(|m| sign_share(group, &material, *m, &hash.0))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let signature: AggregateSignature = aggregate(group, &shares, t).map_err(|e| e.to_string())?;
    origin.bootstrap = Some(Bootstrap {
        group_key: GroupKeyRef { ritual: RitualId::origin(), public_key: material.group_public_key, threshold: t },
        signature,
    });
    Ok((origin, material.member_shares))
}

/// A deterministic discrete-event run of one scenario.
pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    registry: OracleRegistry,
    engines: Vec<NodeEngine>,
    crashed: Vec<bool>,
    index: BTreeMap<NodeId, u32>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    now: u64,
    latency_rng: ChaCha20Rng,
    workload_rng: ChaCha20Rng,
    logged: BTreeSet<BlockHash>,
    rituals_logged: BTreeSet<String>,
    heights: BTreeMap<(StrandId, u64), BlockHash>,
    tx_seen: BTreeSet<crate::digest::Digest32>,
    log: Vec<String>,
    violations: Vec<String>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        let errors = scenario.validate();
        if !errors.is_empty() {
            return Err(SimError::InvalidScenario(errors));
        }
        let group = GroupParams::default();
        let universe = scenario.universe();
        let ids: Vec<NodeId> = (0..universe as u32).map(|i| NodeId::derive(i, &group)).collect();
        let index: BTreeMap<NodeId, u32> = ids.iter().enumerate().map(|(i, n)| (*n, i as u32)).collect();
        let params = ProtocolParams {
            cycles_per_epoch: scenario.cycles_per_epoch,
            reshuffle_duration: scenario.reshuffle_duration,
            join_threshold: scenario.join_threshold,
            strand_count: scenario.strand_count,
            topology_shuffle: scenario.topology_shuffle,
            diverged_partition: scenario.partition.clone(),
        };
        let mut registry = OracleRegistry::new(group);
        let mut dkg_rng = stream(seed, b"dkg");
        let members = &ids[..scenario.node_count];
        let (origin, _) =
            bootstrap_origin(&group, members, params, &mut registry, &mut dkg_rng).map_err(SimError::Setup)?;
        let (configurations, mut keys) =
            initial_configurations(&group, &origin, &mut registry, &mut dkg_rng).map_err(SimError::Setup)?;
        let origin = Arc::new(origin);
        let engines = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                NodeEngine::new(NodeSetup {
                    id: *id,
                    group,
                    origin: origin.clone(),
                    configurations: configurations.clone(),
                    keys: keys.remove(id).unwrap_or_default(),
                    behavior: Behavior::Honest,
                    rng_seed: sha256(&[b"unitychain/node-rng", &seed.to_be_bytes(), &(i as u64).to_be_bytes()]),
                })
            })
            .collect();
        let mut sim = Simulation {
            scenario: scenario.clone(),
            seed,
            registry,
            engines,
            crashed: vec![false; universe],
            index,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            latency_rng: stream(seed, b"latency"),
            workload_rng: stream(seed, b"workload"),
            logged: BTreeSet::new(),
            rituals_logged: BTreeSet::new(),
            heights: BTreeMap::new(),
            tx_seen: BTreeSet::new(),
            log: Vec::new(),
            violations: Vec::new(),
        };
        sim.record(LogRecord::Header {
            seed,
            scenario: scenario.clone(),
            nodes: ids.iter().map(|n| n.short()).collect(),
            configurations: configurations
                .iter()
                .map(|(s, c)| (*s, c.ordered_members.iter().map(|n| sim.index[n]).collect()))
                .collect(),
        });
        for f in &scenario.faults {
            if let FaultKind::Crash { at_tick } = f.kind {
                sim.schedule(at_tick, Payload::Crash(f.node as usize));
            }
        }
        sim.schedule(0, Payload::CycleStart(0));
        Ok(sim)
    }

    pub fn engines(&self) -> &[NodeEngine] {
        &self.engines
    }

    pub fn is_crashed(&self, node: usize) -> bool {
        self.crashed[node]
    }

    pub fn registry(&self) -> &OracleRegistry {
        &self.registry
    }

    pub fn index_of(&self, id: &NodeId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Hash of the first accepted block at each strand height.
    pub fn recorded_heights(&self) -> &BTreeMap<(StrandId, u64), BlockHash> {
        &self.heights
    }

    /// Nodes whose state the invariants are checked on.
    pub fn honest_live(&self) -> Vec<usize> {
        (0..self.engines.len())
            .filter(|i| {
                self.live(*i) && matches!(self.engines[*i].behavior(), Behavior::Honest | Behavior::Colluder(_))
            })
            .collect()
    }

    fn flag(&mut self, what: String) {
        self.record(LogRecord::Violation { tick: self.now, what: what.clone() });
        self.violations.push(what);
    }

    fn schedule(&mut self, at: u64, payload: Payload) {
        self.seq += 1;
        self.queue.push(Scheduled { at, seq: self.seq, payload });
    }

    fn record(&mut self, record: LogRecord) {
        self.log.push(encode_record(&record));
    }

    fn end_tick(&self) -> u64 {
        self.scenario.horizon * self.scenario.cycle_ticks
    }

    fn live(&self, i: usize) -> bool {
        !self.crashed[i] && self.engines[i].status() != NodeStatus::Departed
    }

    /// Runs to the horizon and checks the end-of-run invariants.
    pub fn run(mut self) -> SimOutcome {
        self.run_to_horizon();
        self.finish()
    }

    pub fn run_to_horizon(&mut self) {
        let end = self.end_tick();
        while let Some(ev) = self.queue.pop() {
            if ev.at >= end {
                break;
            }
            self.now = ev.at;
            match ev.payload {
                Payload::CycleStart(c) => self.cycle_start(c),
                Payload::MidCycle(c) => {
                    for i in 0..self.engines.len() {
                        if self.live(i) {
                            let mut ctx = EngineCtx { registry: &mut self.registry };
                            self.engines[i].on_mid_cycle(c, &mut ctx);
                            self.flush(i);
                        }
                    }
                }
                Payload::Deliver { to, from, msg } => {
                    if self.live(to) {
                        let mut ctx = EngineCtx { registry: &mut self.registry };
                        self.engines[to].handle_message(from, &msg, &mut ctx);
                        self.flush(to);
                    }
                }
                Payload::Crash(i) => {
                    if !self.crashed[i] {
                        self.crashed[i] = true;
                        self.record(LogRecord::Fault { tick: self.now, node: i as u32, behavior: "crash".into() });
                    }
                }
            }
        }
        self.now = end;
    }

    /// End-of-run checks and the closing log record.
    pub fn finish(mut self) -> SimOutcome {
        let found = check_invariants(&self);
        for v in found {
            self.record(LogRecord::Violation { tick: self.now, what: v.clone() });
            self.violations.push(v);
        }
        self.record(LogRecord::End {
            tick: self.now,
            cycles: self.scenario.horizon,
            violations: self.violations.len(),
        });
        SimOutcome { seed: self.seed, log: self.log, violations: self.violations }
    }

    fn cycle_start(&mut self, cycle: u64) {
        let t = self.scenario.cycle_ticks;
        self.schedule(cycle * t + t / 2, Payload::MidCycle(cycle));
        if cycle + 1 < self.scenario.horizon {
            self.schedule((cycle + 1) * t, Payload::CycleStart(cycle + 1));
        }
        self.apply_faults(cycle);

        let batch = generate_batch(&self.scenario.workload, &mut self.workload_rng, self.seed, cycle, self.now);
        if !batch.is_empty() {
            self.record(LogRecord::Tx {
                tick: self.now,
                cycle,
                txs: batch.iter().map(|t| TxEntry { key: t.key, digest: t.digest }).collect(),
            });
            for i in 0..self.engines.len() {
                if self.live(i) {
                    self.engines[i].submit(&batch);
                }
            }
        }

        let churn: Vec<_> = self.scenario.churn.iter().filter(|c| c.cycle == cycle).copied().collect();
        for c in churn {
            let i = c.node as usize;
            if !self.live(i) {
                continue;
            }
            let action = match c.action {
                ChurnAction::Join => {
                    self.engines[i].request_join();
                    "join"
                }
                ChurnAction::Leave => {
                    self.engines[i].request_leave();
                    "leave"
                }
            };
            self.record(LogRecord::Churn { tick: self.now, node: c.node, action: action.into() });
            self.flush(i);
        }

        for i in 0..self.engines.len() {
            if self.live(i) {
                let mut ctx = EngineCtx { registry: &mut self.registry };
                self.engines[i].on_cycle_tick(cycle, &mut ctx);
            }
        }
        self.record_cycle_state(cycle);
        for i in 0..self.engines.len() {
            if self.live(i) {
                self.flush(i);
            }
        }
    }

    fn apply_faults(&mut self, cycle: u64) {
        let faults = self.scenario.faults.clone();
        for f in faults {
            let i = f.node as usize;
            let behavior = match f.kind {
                FaultKind::Crash { .. } => continue,
                FaultKind::Silent => Behavior::Silent,
                FaultKind::Equivocate => Behavior::Equivocate,
                FaultKind::Collude { coalition } => Behavior::Colluder(coalition),
            };
            if cycle == f.from_cycle {
                self.engines[i].set_behavior(behavior);
                let name = serde_json::to_value(behavior).ok().map_or_else(String::new, |v| match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                });
                self.record(LogRecord::Fault { tick: self.now, node: f.node, behavior: name });
            }
            if Some(cycle) == f.until_cycle {
                self.engines[i].set_behavior(Behavior::Honest);
                self.record(LogRecord::Fault { tick: self.now, node: f.node, behavior: "honest".into() });
            }
        }
    }

    /// The lowest-indexed live honest member, whose view the cycle record shows.
    pub fn reference_node(&self) -> Option<usize> {
        (0..self.engines.len())
            .find(|i| {
                self.live(*i)
                    && self.engines[*i].status() == NodeStatus::Member
                    && matches!(self.engines[*i].behavior(), Behavior::Honest | Behavior::Colluder(_))
            })
            .or_else(|| (0..self.engines.len()).find(|i| self.live(*i)))
    }

    fn record_cycle_state(&mut self, cycle: u64) {
        let Some(r) = self.reference_node() else { return };
        let e = &self.engines[r];
        let mut problems = Vec::new();
        if let Err(d) = e.partition().check() {
            problems.push(format!("cycle {cycle}: partition defect {d}"));
        }
        let distinct: BTreeSet<&NodeId> = e.leaders().values().collect();
        if distinct.len() != e.leaders().len() {
            problems.push(format!("cycle {cycle}: one node leads two strands"));
        }
        let record = LogRecord::Cycle {
            tick: self.now,
            cycle,
            mode: e.partition().mode(),
            responsible: e.partition().responsible_strands(),
            partition: e.partition().clone(),
            phases: e.phases().clone(),
            leaders: e.leaders().iter().map(|(s, l)| (*s, self.index[l])).collect(),
            pending: e.pending_transactions(),
        };
        self.record(record);
        for p in problems {
            self.flag(p);
        }
    }

    /// Sends node `i`'s outbox and logs its events.
    fn flush(&mut self, i: usize) {
        let out = self.engines[i].drain_outbox();
        let from = self.engines[i].id();
        for Outgoing { to, msg } in out {
            let msg = Arc::new(msg);
            match to {
                Recipient::All => {
                    for j in 0..self.engines.len() {
                        self.send(i, j, from, &msg);
                    }
                }
                Recipient::Nodes(list) => {
                    for n in list {
                        if let Some(j) = self.index.get(&n).copied() {
                            self.send(i, j as usize, from, &msg);
                        }
                    }
                }
            }
        }
        for ev in self.engines[i].drain_events() {
            self.log_event(i, ev);
        }
    }

    fn send(&mut self, from_idx: usize, to: usize, from: NodeId, msg: &Arc<ProtocolMessage>) {
        if !self.live(to) || self.crashed[from_idx] {
            return;
        }
        let delay = if to == from_idx { 0 } else { self.scenario.latency.sample(&mut self.latency_rng) };
        self.schedule(self.now + delay, Payload::Deliver { to, from, msg: msg.clone() });
    }

    fn ids(&self, nodes: impl IntoIterator<Item = NodeId>) -> Vec<u32> {
        nodes.into_iter().map(|n| self.index[&n]).collect()
    }

    fn log_event(&mut self, node: usize, ev: EngineEvent) {
        let tick = self.now;
        match ev {
            EngineEvent::CycleAccepted(b) => {
                let hash = b.hash();
                if !self.logged.insert(hash) {
                    return;
                }
                let key = (b.header.strand, b.header.height);
                if let Some(other) = self.heights.insert(key, hash) {
                    self.flag(format!("fork at {}/{}: {} and {}", key.0, key.1, other.short(), hash.short()));
                }
                for d in &b.header.tx_summary {
                    if !self.tx_seen.insert(*d) {
                        self.flag(format!("transaction {} finalized twice", d.short()));
                    }
                }
                let rec = CycleBlockRecord {
                    tick,
                    strand: b.header.strand,
                    height: b.header.height,
                    cycle: b.header.cycle,
                    hash,
                    parent: b.header.parent_hash,
                    proposer: self.index[&b.header.proposer],
                    txs: b.header.tx_summary.clone(),
                    signers: self.ids(b.signature.signer_set.iter().copied()),
                    handover_signers: b.handover_signature.as_ref().map(|s| self.ids(s.signer_set.iter().copied())),
                    configuration: self.ids(b.configuration.ordered_members.iter().copied()),
                };
                self.record(LogRecord::CycleBlock(rec));
            }
            EngineEvent::EpochAccepted(b) => {
                let hash = b.hash();
                if !self.logged.insert(hash) {
                    return;
                }
                let h = &b.header;
                let rec = EpochBlockRecord {
                    tick,
                    height: h.height,
                    cycle: h.cycle,
                    hash,
                    proposer: self.index[&h.proposer],
                    ascending: h.ascending,
                    descending: h.descending,
                    next_members: self.ids(h.next_members.iter().copied()),
                    ascending_signers: self.ids(b.ascending_signature.signer_set.iter().copied()),
                    descending_signers: self.ids(b.descending_signature.signer_set.iter().copied()),
                };
                self.record(LogRecord::EpochBlock(rec));
            }
            EngineEvent::GenesisAccepted(b) => {
                let hash = b.hash();
                if !self.logged.insert(hash) {
                    return;
                }
                let h = &b.header;
                let rec = GenesisBlockRecord {
                    tick,
                    epoch: h.epoch,
                    cycle: h.cycle,
                    hash,
                    parent: h.parent,
                    proposer: self.index[&h.proposer],
                    configurations: h
                        .new_configurations
                        .iter()
                        .map(|(s, c)| (*s, self.ids(c.ordered_members.iter().copied())))
                        .collect(),
                    partition: h.partition.clone(),
                    submissive_signers: self.ids(b.submissive_signature.signer_set.iter().copied()),
                    dominant_signers: self.ids(b.dominant_signature.signer_set.iter().copied()),
                };
                self.record(LogRecord::GenesisBlock(rec));
            }
            EngineEvent::PhaseChanged { strand, from, to } => {
                self.record(LogRecord::Phase { tick, node: node as u32, strand, from, to });
            }
            EngineEvent::DkgCompleted { ritual, qualified, threshold, .. } => {
                if self.rituals_logged.insert(ritual.to_string()) {
                    self.record(LogRecord::Dkg {
                        tick,
                        ritual: ritual.to_string(),
                        ok: true,
                        qualified: qualified.len(),
                        threshold,
                    });
                }
            }
            EngineEvent::DkgFailed { ritual, surviving, threshold } => {
                if self.rituals_logged.insert(ritual.to_string()) {
                    self.record(LogRecord::Dkg {
                        tick,
                        ritual: ritual.to_string(),
                        ok: false,
                        qualified: surviving,
                        threshold,
                    });
                }
            }
            EngineEvent::Violation(what) => self.flag(what),
        }
    }
}

/// Runs `scenario` with `seed` to completion.
pub fn run_simulation(scenario: &Scenario, seed: u64) -> Result<SimOutcome, SimError> {
    Ok(Simulation::new(scenario, seed)?.run())
}
