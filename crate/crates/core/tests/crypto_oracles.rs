//! Crypto checked against direct computations of the same quantities.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use unitychain::crypto::{
    aggregate, lagrange_at_zero, run_dkg, shamir_reconstruct, shamir_split, sign_with_share, verify_share,
    FieldElement, GroupElement, GroupParams, Polynomial, RitualId,
};
use unitychain::topology::NodeId;

fn small() -> GroupParams {
    GroupParams::new(97, 389, 16).unwrap()
}

fn naive_lagrange(p: &GroupParams, indices: &[u32]) -> Vec<FieldElement> {
    indices
        .iter()
        .map(|&i| {
            let mut acc = p.scalar(1);
            for &j in indices {
                if j != i {
                    let frac = p.mul(p.scalar(j as u64), p.inv(p.sub(p.scalar(j as u64), p.scalar(i as u64))).unwrap());
                    acc = p.mul(acc, frac);
                }
            }
            acc
        })
        .collect()
}

fn naive_feldman(p: &GroupParams, commitments: &[GroupElement], index: u32) -> GroupElement {
    let mut power = p.scalar(1);
    let mut acc = GroupElement::IDENTITY;
    for c in commitments {
        acc = p.op(acc, p.exp(*c, power));
        power = p.mul(power, p.scalar(index as u64));
    }
    acc
}

fn distinct(raw: Vec<u32>, below: u32) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    raw.into_iter().map(|r| 1 + r % (below - 1)).filter(|i| seen.insert(*i)).collect()
}

#[test]
fn small_group_hand_values() {
    let p = small();
    // f(x) = 5 + 3x + 2x^2 over Z_97: f(1)=10, f(2)=19, f(3)=32
    let f = Polynomial::new(vec![p.scalar(5), p.scalar(3), p.scalar(2)]);
    let shares = f.shares(&p, 3);
    assert_eq!(shares.iter().map(|s| s.value.value()).collect::<Vec<_>>(), vec![10, 19, 32]);
    assert_eq!(shamir_reconstruct(&p, &shares, 3).unwrap().value(), 5);
    // lambda_1 = 3, lambda_2 = -3, lambda_3 = 1 for {1,2,3}
    let l = lagrange_at_zero(&p, &[1, 2, 3]).unwrap();
    assert_eq!(l.iter().map(|x| x.value()).collect::<Vec<_>>(), vec![3, 94, 1]);
}

/// `(n, t, a shuffled t-subset of 0..n)`
fn subset(n: std::ops::Range<usize>) -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
    n.prop_flat_map(|n| (Just(n), 1..=n)).prop_flat_map(|(n, t)| {
        (Just(n), Just(t), prop::sample::subsequence((0..n).collect::<Vec<_>>(), t).prop_shuffle())
    })
}

fn signer_sets() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (4usize..10).prop_flat_map(|n| {
        let set = prop::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n).prop_shuffle();
        (Just(n), prop::collection::vec(set, 3))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_lagrange_matches_naive(raw in prop::collection::vec(any::<u32>(), 1..12)) {
        for p in [small(), GroupParams::default()] {
            let idx = distinct(raw.clone(), 97);
            prop_assert_eq!(lagrange_at_zero(&p, &idx).unwrap(), naive_lagrange(&p, &idx));
        }
    }

    #[test]
    fn any_t_subset_reconstructs(secret in any::<u64>(), (n, t, picked) in subset(1..12), seed in any::<u64>()) {
        let p = GroupParams::default();
        let s = p.scalar(secret);
        let split = shamir_split(&p, s, n, t, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let shares: Vec<_> = picked.iter().map(|&i| split.shares[i]).collect();
        prop_assert_eq!(shamir_reconstruct(&p, &shares, t).unwrap(), s);
        for sh in &split.shares {
            prop_assert!(verify_share(&p, &split.commitments, sh));
            prop_assert_eq!(p.commit(sh.value), naive_feldman(&p, &split.commitments, sh.index));
        }
    }

    #[test]
    fn tampered_shares_fail_feldman(n in 2usize..9, seed in any::<u64>(), bump in 1u64..96) {
        let p = small();
        let split = shamir_split(&p, p.scalar(7), n, n / 2 + 1, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let mut bad = split.shares[0];
        bad.value = p.add(bad.value, p.scalar(bump));
        prop_assert!(!verify_share(&p, &split.commitments, &bad));
    }

    #[test]
    fn threshold_aggregates_are_unique((n, picks) in signer_sets(), seed in any::<u64>(), msg in any::<Vec<u8>>()) {
        let p = GroupParams::default();
        let members: Vec<NodeId> = (0..n as u32).map(|i| NodeId::derive(i, &p)).collect();
        let t = unitychain::topology::majority_threshold(n).unwrap();
        let m = run_dkg(&p, RitualId::origin(), &members, t, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let all: Vec<_> = m.member_shares.values().copied().collect();
        let x = shamir_reconstruct(&p, &all, t).unwrap();
        prop_assert_eq!(p.commit(x), m.group_public_key);
        let oracle = p.exp(p.hash_to_group(&msg), x);
        let sigs: Vec<_> = m.member_shares.iter().map(|(id, s)| sign_with_share(&p, *id, s, &msg)).collect();
        prop_assert_eq!(m.member_shares.len(), n);
        for pick in picks {
            let chosen: Vec<_> = pick.iter().map(|&i| sigs[i]).collect();
            if chosen.len() < t {
                prop_assert!(aggregate(&p, &chosen, t).is_err());
            } else {
                prop_assert_eq!(aggregate(&p, &chosen, t).unwrap().value, oracle);
            }
        }
    }
}
