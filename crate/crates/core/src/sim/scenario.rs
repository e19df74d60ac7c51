use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::chain::{ShufflePolicy, StrandId};
use crate::topology::KeyRangePartition;

/// Message delay in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LatencyModel {
    Fixed { ticks: u64 },
    UniformRange { lo: u64, hi: u64 },
}

impl LatencyModel {
    pub fn bounds(&self) -> (u64, u64) {
        match *self {
            LatencyModel::Fixed { ticks } => (ticks, ticks),
            LatencyModel::UniformRange { lo, hi } => (lo, hi),
        }
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        match *self {
            LatencyModel::Fixed { ticks } => ticks,
            LatencyModel::UniformRange { lo, hi } => lo + rng.next_u64() % (hi - lo + 1),
        }
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::UniformRange { lo: 1, hi: 10 }
    }
}

/// Transactions submitted at every cycle start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Workload {
    FixedPerCycle { count: u64 },
    SeededPoisson { rate: f64 },
}

impl Default for Workload {
    fn default() -> Self {
        Workload::FixedPerCycle { count: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum FaultKind {
    /// Stops sending and receiving at `at_tick`.
    Crash {
        at_tick: u64,
    },
    Silent,
    Equivocate,
    Collude {
        coalition: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub node: u32,
    #[serde(flatten)]
    pub kind: FaultKind,
    pub from_cycle: u64,
    /// Exclusive; `None` lasts for the whole run.
    pub until_cycle: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnAction {
    Join,
    Leave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnSpec {
    pub cycle: u64,
    pub node: u32,
    pub action: ChurnAction,
}

/// A complete simulation setup. Nodes are numbered; `0..node_count` form the
/// origin membership and higher indices start as observers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub node_count: usize,
    pub strand_count: usize,
    pub cycles_per_epoch: u64,
    pub reshuffle_duration: u64,
    pub join_threshold: usize,
    pub cycle_ticks: u64,
    /// Number of cycles to run.
    pub horizon: u64,
    pub seed: Option<u64>,
    pub topology_shuffle: ShufflePolicy,
    pub latency: LatencyModel,
    pub workload: Workload,
    pub partition: KeyRangePartition,
    pub coalition: Vec<u32>,
    pub faults: Vec<FaultSpec>,
    pub churn: Vec<ChurnSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            node_count: 8,
            strand_count: 2,
            cycles_per_epoch: 10,
            reshuffle_duration: 3,
            join_threshold: 4,
            cycle_ticks: 100,
            horizon: 50,
            seed: None,
            topology_shuffle: ShufflePolicy::EveryCycle,
            latency: LatencyModel::default(),
            workload: Workload::default(),
            partition: KeyRangePartition::parity(),
            coalition: Vec::new(),
            faults: Vec::new(),
            churn: Vec::new(),
        }
    }
}

impl Scenario {
    /// Total number of simulated nodes, observers included.
    pub fn universe(&self) -> usize {
        let highest = self
            .faults
            .iter()
            .map(|f| f.node)
            .chain(self.churn.iter().map(|c| c.node))
            .chain(self.coalition.iter().copied())
            .map(|n| n as usize + 1)
            .max()
            .unwrap_or(0);
        self.node_count.max(highest)
    }

    /// Semantic checks; every problem is reported.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.node_count < crate::chain::MIN_MEMBERS {
            errors.push(format!("node_count must be at least {}, got {}", crate::chain::MIN_MEMBERS, self.node_count));
        }
        if self.strand_count != 2 {
            errors.push(format!("strand_count must be 2, got {}", self.strand_count));
        }
        if self.cycles_per_epoch == 0 {
            errors.push("cycles_per_epoch must be positive".into());
        }
        if self.reshuffle_duration == 0 {
            errors.push("reshuffle_duration must be positive".into());
        }
        if self.horizon == 0 {
            errors.push("horizon must be positive".into());
        }
        if let ShufflePolicy::EveryEpochs(0) = self.topology_shuffle {
            errors.push("topology_shuffle every_epochs needs k >= 1".into());
        }
        let (lo, hi) = self.latency.bounds();
        if lo == 0 || lo > hi {
            errors.push(format!("latency bounds must satisfy 1 <= lo <= hi, got {lo}..{hi}"));
        }
        if hi.saturating_mul(8) > self.cycle_ticks {
            errors.push(format!(
                "cycle_ticks {} too short for latency {hi}: need at least {}",
                self.cycle_ticks,
                hi.saturating_mul(8)
            ));
        }
        if let Workload::SeededPoisson { rate } = self.workload {
            if !(rate.is_finite() && (0.0..=100_000.0).contains(&rate)) {
                errors.push(format!("poisson rate {rate} out of range"));
            }
        }
        if let Err(d) = self.partition.check() {
            errors.push(format!("partition is not total and disjoint: {d}"));
        }
        let strands: Vec<StrandId> = self.partition.assignments.keys().copied().collect();
        if strands != StrandId::ALL {
            errors.push("partition must assign both strands".into());
        }
        if self.join_threshold == 0 {
            errors.push("join_threshold must be at least 1".into());
        }
        let joiners: Vec<u32> = self.churn.iter().filter(|c| c.action == ChurnAction::Join).map(|c| c.node).collect();
        let exists = |n: u32| (n as usize) < self.node_count || joiners.contains(&n);
        let mut faulted = std::collections::BTreeSet::new();
        for f in &self.faults {
            if !exists(f.node) {
                errors.push(format!("fault on node {}: no such node", f.node));
            }
            if !faulted.insert(f.node) {
                errors.push(format!("node {} has more than one fault", f.node));
            }
            if let Some(u) = f.until_cycle {
                if u <= f.from_cycle {
                    errors.push(format!("fault on node {}: until_cycle {u} <= from_cycle {}", f.node, f.from_cycle));
                }
            }
        }
        for &n in &self.coalition {
            if !exists(n) {
                errors.push(format!("coalition member {n}: no such node"));
            }
        }
        for c in &self.churn {
            let member = (c.node as usize) < self.node_count;
            match c.action {
                ChurnAction::Join if member => {
                    errors.push(format!("churn: node {} joins but is already an origin member", c.node))
                }
                _ => {}
            }
            if c.cycle >= self.horizon {
                errors.push(format!("churn for node {} at cycle {} is beyond the horizon", c.node, c.cycle));
            }
        }
        errors
    }
}
