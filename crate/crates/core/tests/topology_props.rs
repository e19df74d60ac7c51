use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use unitychain::chain::StrandId;
use unitychain::crypto::{GroupParams, VrfSeed};
use unitychain::digest::sha256;
use unitychain::topology::{
    carryover_check, majority_threshold, resolve_leadership_conflict, route_key, shuffle_members, GroupKeyRef,
    KeyPredicate, KeyRange, KeyRangePartition, NetworkConfiguration, NodeId,
};

fn nodes(n: u32) -> Vec<NodeId> {
    (0..n).map(|i| NodeId::derive(i, &GroupParams::default())).collect()
}

fn positions(members: &[NodeId], shuffled: &[NodeId]) -> Vec<usize> {
    shuffled.iter().map(|m| members.iter().position(|x| x == m).unwrap()).collect()
}

// Expected orders come from a separate ChaCha20 keystream implementation
// running the same Fisher-Yates with rejection sampling.
#[test]
fn golden_permutations() {
    let five = nodes(5);
    let out = shuffle_members(&five, &VrfSeed([0; 32]));
    assert_eq!(positions(&five, &out), vec![1, 3, 2, 4, 0]);

    let eight = nodes(8);
    let seed: [u8; 32] = std::array::from_fn(|i| i as u8);
    let out = shuffle_members(&eight, &VrfSeed(seed));
    assert_eq!(positions(&eight, &out), vec![5, 7, 4, 3, 0, 6, 2, 1]);
}

#[test]
fn all_orderings_of_five_are_uniform() {
    let five = nodes(5);
    let samples = 60_000u64;
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for i in 0..samples {
        let seed = VrfSeed(sha256(&[b"uniformity", &i.to_be_bytes()]));
        *counts.entry(positions(&five, &shuffle_members(&five, &seed))).or_default() += 1;
    }
    assert_eq!(counts.len(), 120);
    let p = 1.0 / 120.0;
    let mean = samples as f64 * p;
    let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
    for (order, c) in counts {
        assert!((c as f64 - mean).abs() <= 5.0 * sigma, "{order:?}: {c} vs {mean:.0}");
    }
}

#[test]
fn majority_examples() {
    for (n, t) in [(1, 1), (4, 3), (5, 3), (7, 4), (8, 5), (10, 6), (16, 9), (32, 17), (100, 51)] {
        assert_eq!(majority_threshold(n).unwrap(), t, "n={n}");
    }
    assert!(majority_threshold(0).is_err());
}

fn config(strand: StrandId, members: Vec<NodeId>) -> NetworkConfiguration {
    NetworkConfiguration {
        strand,
        ordered_members: members,
        group_key: GroupKeyRef {
            ritual: unitychain::crypto::RitualId::origin(),
            public_key: unitychain::crypto::GroupElement::IDENTITY,
            threshold: 1,
        },
        responsibility: KeyPredicate::All,
    }
}

fn partition_from_splits(mut splits: Vec<u64>) -> KeyRangePartition {
    splits.sort_unstable();
    splits.dedup();
    splits.retain(|s| *s > 0);
    let mut bounds = vec![0u64];
    bounds.extend(splits);
    let mut ranges: BTreeMap<StrandId, Vec<KeyRange>> = BTreeMap::new();
    for (i, start) in bounds.iter().enumerate() {
        let end = bounds.get(i + 1).map_or(u64::MAX, |next| next - 1);
        ranges.entry(StrandId::ALL[i % 2]).or_default().push(KeyRange { start: *start, end });
    }
    for s in StrandId::ALL {
        ranges.entry(s).or_default();
    }
    KeyRangePartition::ranges(ranges)
}

proptest! {
    #[test]
    fn shuffle_is_a_bijection(n in 1u32..40, seed in any::<[u8; 32]>()) {
        let members = nodes(n);
        let out = shuffle_members(&members, &VrfSeed(seed));
        prop_assert_eq!(out.len(), members.len());
        let a: BTreeSet<_> = out.iter().collect();
        let b: BTreeSet<_> = members.iter().collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(shuffle_members(&members, &VrfSeed(seed)), out);
    }

    #[test]
    fn ranges_partition_is_total(splits in prop::collection::vec(any::<u64>(), 0..8), keys in prop::collection::vec(any::<u64>(), 1..64)) {
        let p = partition_from_splits(splits);
        prop_assert!(p.check().is_ok());
        for k in keys.into_iter().chain([0, u64::MAX]) {
            let owners = p.claimants(k);
            prop_assert_eq!(owners.len(), 1);
            prop_assert_eq!(route_key(k, &p), owners[0]);
        }
    }

    #[test]
    fn parity_and_full_are_total(key in any::<u64>(), s in prop::sample::select(StrandId::ALL.to_vec())) {
        prop_assert_eq!(KeyRangePartition::parity().claimants(key).len(), 1);
        prop_assert_eq!(route_key(key, &KeyRangePartition::full(s)), s);
    }

    #[test]
    fn carryover_is_monotone(n in 4u32..30, keep in 0usize..30, extra in 0u32..10) {
        let prior: BTreeSet<NodeId> = nodes(n).into_iter().collect();
        let next: BTreeSet<NodeId> = prior.iter().copied().take(keep).collect();
        let ok = carryover_check(&prior, &next).unwrap();
        prop_assert_eq!(ok, keep.min(n as usize) >= majority_threshold(n as usize).unwrap());
        // newcomers never hurt, and keeping more never hurts
        let mut bigger = next.clone();
        bigger.extend((0..extra).map(|i| NodeId::derive(1000 + i, &GroupParams::default())));
        prop_assert_eq!(carryover_check(&prior, &bigger).unwrap(), ok);
        if let Some(m) = prior.iter().find(|m| !next.contains(m)) {
            let mut more = next.clone();
            more.insert(*m);
            prop_assert!(carryover_check(&prior, &more).unwrap() >= ok);
        }
    }

    #[test]
    fn leaders_end_up_distinct(n in 2u32..12, a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
        let members = nodes(n);
        let mut configs = vec![
            config(StrandId::Negative, shuffle_members(&members, &VrfSeed(b))),
            config(StrandId::Positive, shuffle_members(&members, &VrfSeed(a))),
        ];
        let positive_leader = configs[1].ordered_members[0];
        resolve_leadership_conflict(&mut configs);
        prop_assert_eq!(configs[0].strand, StrandId::Positive);
        prop_assert_eq!(configs[0].ordered_members[0], positive_leader);
        prop_assert_ne!(configs[0].ordered_members[0], configs[1].ordered_members[0]);
    }
}
