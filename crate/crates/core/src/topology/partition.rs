//! Key-range partitioning of the 64-bit keyspace between strands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::StrandId;

/// Inclusive interval of keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyRange {
    pub start: u64,
    pub end: u64,
}

impl KeyRange {
    pub fn contains(&self, key: u64) -> bool {
        self.start <= key && key <= self.end
    }
}

/// Which keys one strand claims.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPredicate {
    All,
    Even,
    Odd,
    Ranges(Vec<KeyRange>),
}

impl KeyPredicate {
    pub fn matches(&self, key: u64) -> bool {
        match self {
            KeyPredicate::All => true,
            KeyPredicate::Even => key.is_multiple_of(2),
            KeyPredicate::Odd => key % 2 == 1,
            KeyPredicate::Ranges(ranges) => ranges.iter().any(|r| r.contains(key)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Parity,
    Ranges,
    FullKeyspace(StrandId),
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PartitionDefect {
    #[error("key {0} is claimed by no strand")]
    Gap(u64),
    #[error("key {0} is claimed by more than one strand")]
    Overlap(u64),
    #[error("range {start}..={end} is empty")]
    EmptyRange { start: u64, end: u64 },
}

/// Assignment of key predicates to strands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRangePartition {
    pub assignments: BTreeMap<StrandId, KeyPredicate>,
}

impl KeyRangePartition {
    /// Even keys to the positive strand, odd keys to the negative strand.
    pub fn parity() -> Self {
        Self::from_assignments([(StrandId::Positive, KeyPredicate::Even), (StrandId::Negative, KeyPredicate::Odd)])
    }

    pub fn full(strand: StrandId) -> Self {
        Self::from_assignments([(strand, KeyPredicate::All)])
    }

    pub fn ranges(assignments: impl IntoIterator<Item = (StrandId, Vec<KeyRange>)>) -> Self {
        Self::from_assignments(assignments.into_iter().map(|(s, r)| (s, KeyPredicate::Ranges(r))))
    }

    /// Builds without checking totality or disjointness.
    pub fn from_assignments(assignments: impl IntoIterator<Item = (StrandId, KeyPredicate)>) -> Self {
        KeyRangePartition { assignments: assignments.into_iter().collect() }
    }

    pub fn mode(&self) -> PartitionMode {
        let preds: Vec<&KeyPredicate> = self.assignments.values().collect();
        if let [KeyPredicate::All] = preds.as_slice() {
            return PartitionMode::FullKeyspace(*self.assignments.keys().next().unwrap());
        }
        if preds.iter().all(|p| matches!(p, KeyPredicate::Even | KeyPredicate::Odd)) {
            PartitionMode::Parity
        } else if preds.iter().all(|p| matches!(p, KeyPredicate::Ranges(_))) {
            PartitionMode::Ranges
        } else {
            PartitionMode::Mixed
        }
    }

    pub fn claimants(&self, key: u64) -> Vec<StrandId> {
        self.assignments.iter().filter(|(_, p)| p.matches(key)).map(|(s, _)| *s).collect()
    }

    pub fn claims(&self, strand: StrandId, key: u64) -> bool {
        self.assignments.get(&strand).is_some_and(|p| p.matches(key))
    }

    /// Strands that are responsible for any key.
    pub fn responsible_strands(&self) -> Vec<StrandId> {
        self.assignments
            .iter()
            .filter(|(_, p)| !matches!(p, KeyPredicate::Ranges(r) if r.is_empty()))
            .map(|(s, _)| *s)
            .collect()
    }

    /// Exact totality and disjointness check.
    ///
    /// Range boundaries cut the keyspace into cells that every predicate
    /// treats uniformly per parity class, so counting claimants for each
    /// (cell, parity) pair decides the question for all 2^64 keys.
    pub fn check(&self) -> Result<(), PartitionDefect> {
        let mut cuts: Vec<u64> = vec![0];
        for pred in self.assignments.values() {
            if let KeyPredicate::Ranges(ranges) = pred {
                for r in ranges {
                    if r.start > r.end {
                        return Err(PartitionDefect::EmptyRange { start: r.start, end: r.end });
                    }
                    cuts.push(r.start);
                    if r.end < u64::MAX {
                        cuts.push(r.end + 1);
                    }
                }
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        for (i, &start) in cuts.iter().enumerate() {
            let end = cuts.get(i + 1).map_or(u64::MAX, |next| next - 1);
            for parity in 0..2u64 {
                // smallest key in [start, end] with this parity
                let probe = if start % 2 == parity { Some(start) } else { start.checked_add(1) };
                let Some(probe) = probe.filter(|k| *k <= end) else { continue };
                match self.claimants(probe).len() {
                    0 => return Err(PartitionDefect::Gap(probe)),
                    1 => {}
                    _ => return Err(PartitionDefect::Overlap(probe)),
                }
            }
        }
        Ok(())
    }
}

/// The unique strand responsible for `key`.
///
/// Panics if the partition fails [`KeyRangePartition::check`].
pub fn route_key(key: u64, partition: &KeyRangePartition) -> StrandId {
    let claimants = partition.claimants(key);
    assert_eq!(claimants.len(), 1, "partition is not total and disjoint at key {key}");
    claimants[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_routing() {
        let p = KeyRangePartition::parity();
        assert_eq!(route_key(4, &p), StrandId::Positive);
        assert_eq!(route_key(7, &p), StrandId::Negative);
        assert_eq!(p.mode(), PartitionMode::Parity);
        assert!(p.check().is_ok());
    }

    #[test]
    fn full_keyspace_routing() {
        let p = KeyRangePartition::full(StrandId::Positive);
        for k in [0, 1, 12345, u64::MAX] {
            assert_eq!(route_key(k, &p), StrandId::Positive);
        }
        assert_eq!(p.mode(), PartitionMode::FullKeyspace(StrandId::Positive));
    }

    #[test]
    fn defects_are_found() {
        let both_even = KeyRangePartition::from_assignments([
            (StrandId::Positive, KeyPredicate::Even),
            (StrandId::Negative, KeyPredicate::Even),
        ]);
        assert_eq!(both_even.check(), Err(PartitionDefect::Overlap(0)));
        let overlap = KeyRangePartition::from_assignments([
            (StrandId::Positive, KeyPredicate::Even),
            (StrandId::Negative, KeyPredicate::All),
        ]);
        assert_eq!(overlap.check(), Err(PartitionDefect::Overlap(0)));
        let gap = KeyRangePartition::ranges([
            (StrandId::Positive, vec![KeyRange { start: 0, end: 99 }]),
            (StrandId::Negative, vec![KeyRange { start: 101, end: u64::MAX }]),
        ]);
        assert_eq!(gap.check(), Err(PartitionDefect::Gap(100)));
        let halves = KeyRangePartition::ranges([
            (StrandId::Positive, vec![KeyRange { start: 0, end: u64::MAX / 2 }]),
            (StrandId::Negative, vec![KeyRange { start: u64::MAX / 2 + 1, end: u64::MAX }]),
        ]);
        assert!(halves.check().is_ok());
        assert_eq!(halves.mode(), PartitionMode::Ranges);
    }
}
