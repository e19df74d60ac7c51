use std::collections::BTreeSet;

use crate::chain::MIN_MEMBERS;
use crate::topology::{majority_threshold, NodeId};

/// Membership for the next period and the requests left waiting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipPlan {
    /// Sorted.
    pub next: Vec<NodeId>,
    pub admitted: Vec<NodeId>,
    pub honored_leaves: Vec<NodeId>,
    pub deferred_joins: Vec<NodeId>,
    pub deferred_leaves: Vec<NodeId>,
}

/// Admits joins in id order up to `join_threshold`, then honors leaves in id
/// order while a majority of `current` carries over and the next membership
/// keeps at least [`MIN_MEMBERS`].
pub fn plan_membership(
    current: &BTreeSet<NodeId>,
    joins: &BTreeSet<NodeId>,
    leaves: &BTreeSet<NodeId>,
    join_threshold: usize,
) -> MembershipPlan {
    let candidates: Vec<NodeId> = joins.iter().filter(|j| !current.contains(j)).copied().collect();
    let cut = candidates.len().min(join_threshold);
    let admitted = candidates[..cut].to_vec();
    let deferred_joins = candidates[cut..].to_vec();

    let need = majority_threshold(current.len()).unwrap_or(0);
    let mut retained = current.len();
    let mut honored_leaves = Vec::new();
    let mut deferred_leaves = Vec::new();
    for l in leaves.iter().filter(|l| current.contains(l)) {
        if retained > need && retained - 1 + admitted.len() >= MIN_MEMBERS {
            retained -= 1;
            honored_leaves.push(*l);
        } else {
            deferred_leaves.push(*l);
        }
    }
    let gone: BTreeSet<&NodeId> = honored_leaves.iter().collect();
    let next: BTreeSet<NodeId> = current.iter().filter(|m| !gone.contains(m)).chain(admitted.iter()).copied().collect();
    MembershipPlan { next: next.into_iter().collect(), admitted, honored_leaves, deferred_joins, deferred_leaves }
}
