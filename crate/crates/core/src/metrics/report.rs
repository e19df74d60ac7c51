use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::StrandId;
use crate::sim::{parse_log, CycleBlockRecord, EpochBlockRecord, GenesisBlockRecord, LogError, LogRecord, Scenario};
use crate::topology::{majority_threshold, KeyRangePartition, PartitionMode};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("coalition is empty")]
    EmptyCoalition,
    #[error("coalition member {0} is not a node of this run")]
    UnknownNode(u32),
}

/// Partition and phase snapshot taken at a cycle start.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleView {
    pub cycle: u64,
    pub mode: PartitionMode,
    pub partition: KeyRangePartition,
    /// Member sets of each strand's active configuration.
    pub active: BTreeMap<StrandId, BTreeSet<u32>>,
}

/// A parsed, complete event log.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub scenario: Scenario,
    pub nodes: Vec<String>,
    pub initial: BTreeMap<StrandId, Vec<u32>>,
    pub submitted: Vec<u64>,
    pub cycles: Vec<CycleView>,
    pub cycle_blocks: Vec<CycleBlockRecord>,
    pub epochs: Vec<EpochBlockRecord>,
    pub geneses: Vec<GenesisBlockRecord>,
    pub violations: Vec<String>,
    /// Ordered configuration changes: (cycle, strand, new order).
    pub reconfigurations: Vec<(u64, StrandId, Vec<u32>)>,
}

impl RunLog {
    pub fn parse(text: &str) -> Result<RunLog, MetricsError> {
        Ok(Self::from_records(parse_log(text)?))
    }

    /// `records` must be framed as [`parse_log`] returns them.
    pub fn from_records(records: Vec<LogRecord>) -> RunLog {
        let mut run = RunLog {
            seed: 0,
            scenario: Scenario::default(),
            nodes: Vec::new(),
            initial: BTreeMap::new(),
            submitted: Vec::new(),
            cycles: Vec::new(),
            cycle_blocks: Vec::new(),
            epochs: Vec::new(),
            geneses: Vec::new(),
            violations: Vec::new(),
            reconfigurations: Vec::new(),
        };
        let mut current: BTreeMap<StrandId, Vec<u32>> = BTreeMap::new();
        for r in records {
            match r {
                LogRecord::Header { seed, scenario, nodes, configurations } => {
                    run.submitted = vec![0; scenario.horizon as usize];
                    run.seed = seed;
                    run.scenario = scenario;
                    run.nodes = nodes;
                    current = configurations.clone();
                    run.initial = configurations;
                }
                LogRecord::Tx { cycle, txs, .. } => {
                    if let Some(slot) = run.submitted.get_mut(cycle as usize) {
                        *slot += txs.len() as u64;
                    }
                }
                LogRecord::Cycle { cycle, mode, partition, .. } => {
                    let active = current.iter().map(|(s, c)| (*s, c.iter().copied().collect())).collect();
                    run.cycles.push(CycleView { cycle, mode, partition, active });
                }
                LogRecord::CycleBlock(b) => {
                    current.insert(b.strand, b.configuration.clone());
                    run.reconfigurations.push((b.cycle, b.strand, b.configuration.clone()));
                    run.cycle_blocks.push(b);
                }
                LogRecord::EpochBlock(e) => run.epochs.push(e),
                LogRecord::GenesisBlock(g) => {
                    for (s, c) in &g.configurations {
                        current.insert(*s, c.clone());
                        run.reconfigurations.push((g.cycle, *s, c.clone()));
                    }
                    run.geneses.push(g);
                }
                LogRecord::Violation { what, .. } => run.violations.push(what),
                LogRecord::Fault { .. }
                | LogRecord::Churn { .. }
                | LogRecord::Phase { .. }
                | LogRecord::Dkg { .. }
                | LogRecord::End { .. } => {}
            }
        }
        run
    }

    pub fn horizon(&self) -> u64 {
        self.scenario.horizon
    }

    /// Transactions finalized per cycle.
    pub fn throughput(&self) -> Vec<u64> {
        let mut out = vec![0; self.horizon() as usize];
        for b in &self.cycle_blocks {
            if let Some(slot) = out.get_mut(b.cycle as usize) {
                *slot += b.txs.len() as u64;
            }
        }
        out
    }

    pub fn blocks_per_cycle(&self) -> Vec<u64> {
        let mut out = vec![0; self.horizon() as usize];
        for b in &self.cycle_blocks {
            if let Some(slot) = out.get_mut(b.cycle as usize) {
                *slot += 1;
            }
        }
        out
    }

    /// Transactions waiting at the start of each cycle, that cycle's arrivals included.
    pub fn pending(&self) -> Vec<u64> {
        let finalized = self.throughput();
        let mut waiting = 0u64;
        let mut out = Vec::with_capacity(finalized.len());
        for (c, done) in finalized.iter().enumerate() {
            waiting += self.submitted.get(c).copied().unwrap_or(0);
            out.push(waiting);
            waiting = waiting.saturating_sub(*done);
        }
        out
    }

    /// Cycles with pending transactions in which no strand finalized a block.
    pub fn downtime_series(&self) -> Vec<bool> {
        self.blocks_per_cycle().iter().zip(self.pending()).map(|(&b, p)| b == 0 && p > 0).collect()
    }

    /// Cycles from each epoch block to its genesis; `None` if the run ended first.
    pub fn reshuffle_durations(&self) -> Vec<(u64, Option<u64>)> {
        self.epochs
            .iter()
            .map(|e| {
                let g = self.geneses.iter().find(|g| g.epoch == e.height);
                (e.height, g.map(|g| g.cycle - e.cycle))
            })
            .collect()
    }
}

pub fn compute_downtime(log: &RunLog) -> u64 {
    log.downtime_series().iter().filter(|d| **d).count() as u64
}

/// Normalized Kendall-tau distance over the elements both orders share.
/// `None` when fewer than two are shared.
pub fn kendall_tau_distance(a: &[u32], b: &[u32]) -> Option<f64> {
    let pos: BTreeMap<u32, usize> = b.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let ranks: Vec<usize> = a.iter().filter_map(|x| pos.get(x).copied()).collect();
    let m = ranks.len();
    if m < 2 {
        return None;
    }
    let mut discordant = 0u64;
    for i in 0..m {
        for j in i + 1..m {
            if ranks[i] > ranks[j] {
                discordant += 1;
            }
        }
    }
    Some(discordant as f64 / (m * (m - 1) / 2) as f64)
}

/// Mean and variance of the normalized distance between two independent
/// uniform permutations of `n` elements.
pub fn uniform_kendall_moments(n: usize) -> (f64, f64) {
    let n = n as f64;
    (0.5, (2.0 * n + 5.0) / (18.0 * n * (n - 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShuffleEntropy {
    /// Mean distance of the reconfigurations in each cycle.
    pub series: Vec<Option<f64>>,
    /// Every individual distance, in log order.
    pub samples: Vec<f64>,
    pub mean: Option<f64>,
}

pub fn compute_shuffle_entropy(log: &RunLog) -> ShuffleEntropy {
    let mut previous = log.initial.clone();
    let mut per_cycle: Vec<Vec<f64>> = vec![Vec::new(); log.horizon() as usize];
    let mut samples = Vec::new();
    for (cycle, strand, order) in &log.reconfigurations {
        if let Some(prev) = previous.get(strand) {
            if let Some(d) = kendall_tau_distance(prev, order) {
                samples.push(d);
                if let Some(slot) = per_cycle.get_mut(*cycle as usize) {
                    slot.push(d);
                }
            }
        }
        previous.insert(*strand, order.clone());
    }
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    ShuffleEntropy { series: per_cycle.iter().map(|v| mean_of(v)).collect(), mean: mean_of(&samples), samples }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionControl {
    pub members: Vec<u32>,
    /// Share of cycles in which the coalition held a majority of some active configuration.
    pub control_fraction: f64,
    pub control_cycles: u64,
    /// Share of finalized cycle blocks proposed by a coalition member.
    pub leader_capture_rate: f64,
    pub leader_hits: u64,
    pub leader_observations: u64,
    /// Longest run of consecutive blocks on one strand led by the coalition.
    pub max_leader_streak: u64,
}

fn check_coalition(log: &RunLog, coalition: &[u32]) -> Result<BTreeSet<u32>, MetricsError> {
    if coalition.is_empty() {
        return Err(MetricsError::EmptyCoalition);
    }
    let universe = log.nodes.len() as u32;
    if let Some(&bad) = coalition.iter().find(|&&n| n >= universe) {
        return Err(MetricsError::UnknownNode(bad));
    }
    Ok(coalition.iter().copied().collect())
}

/// Per-cycle flags: did the coalition hold a majority of any active configuration?
pub fn coalition_control_series(log: &RunLog, coalition: &BTreeSet<u32>) -> Vec<bool> {
    let mut out = vec![false; log.horizon() as usize];
    for view in &log.cycles {
        let held = view.active.values().any(|members| {
            let need = majority_threshold(members.len()).unwrap_or(usize::MAX);
            members.intersection(coalition).count() >= need
        });
        if let Some(slot) = out.get_mut(view.cycle as usize) {
            *slot = held;
        }
    }
    out
}

/// Coalition leader hits per cycle.
pub fn coalition_leader_series(log: &RunLog, coalition: &BTreeSet<u32>) -> Vec<u64> {
    let mut out = vec![0; log.horizon() as usize];
    for b in &log.cycle_blocks {
        if coalition.contains(&b.proposer) {
            if let Some(slot) = out.get_mut(b.cycle as usize) {
                *slot += 1;
            }
        }
    }
    out
}

pub fn max_leader_streak(log: &RunLog, coalition: &BTreeSet<u32>) -> u64 {
    let mut best = 0;
    for strand in StrandId::ALL {
        let mut blocks: Vec<&CycleBlockRecord> = log.cycle_blocks.iter().filter(|b| b.strand == strand).collect();
        blocks.sort_by_key(|b| b.height);
        let mut run = 0;
        for b in blocks {
            run = if coalition.contains(&b.proposer) { run + 1 } else { 0 };
            best = best.max(run);
        }
    }
    best
}

pub fn coalition_control_probability(log: &RunLog, coalition: &[u32]) -> Result<CoalitionControl, MetricsError> {
    let set = check_coalition(log, coalition)?;
    let control = coalition_control_series(log, &set);
    let control_cycles = control.iter().filter(|c| **c).count() as u64;
    let leader_hits = log.cycle_blocks.iter().filter(|b| set.contains(&b.proposer)).count() as u64;
    let leader_observations = log.cycle_blocks.len() as u64;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(CoalitionControl {
        members: set.iter().copied().collect(),
        control_fraction: ratio(control_cycles, log.horizon()),
        control_cycles,
        leader_capture_rate: ratio(leader_hits, leader_observations),
        leader_hits,
        leader_observations,
        max_leader_streak: max_leader_streak(log, &set),
    })
}

/// The `size` nodes closest to leadership at the start: slots taken
/// alternately from each strand's initial order.
pub fn informed_coalition(initial: &BTreeMap<StrandId, Vec<u32>>, size: usize) -> Vec<u32> {
    let longest = initial.values().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<u32> = Vec::new();
    for slot in 0..longest {
        for order in initial.values() {
            if let Some(&n) = order.get(slot) {
                if out.len() < size && !out.contains(&n) {
                    out.push(n);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub cycle: u64,
    pub submitted: u64,
    pub finalized: u64,
    pub blocks: u64,
    pub pending: u64,
    pub down: bool,
    pub shuffle_distance: Option<f64>,
    pub coalition_leaders: u64,
    pub coalition_control: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReshuffleRow {
    pub epoch: u64,
    pub cycles: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub horizon: u64,
    pub nodes: usize,
    pub submitted: u64,
    pub finalized: u64,
    pub blocks: u64,
    pub downtime_cycles: u64,
    pub epochs: usize,
    pub geneses: usize,
    pub violations: usize,
    pub shuffle_distance_mean: Option<f64>,
    pub shuffle_samples: usize,
    pub coalition: Option<CoalitionControl>,
    pub reshuffles: Vec<ReshuffleRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<CycleRow>,
    pub summary: Summary,
}

pub fn build_report(log: &RunLog, coalition: Option<&[u32]>) -> Result<MetricsReport, MetricsError> {
    let control = coalition.map(|c| coalition_control_probability(log, c)).transpose()?;
    let set: BTreeSet<u32> = coalition.unwrap_or_default().iter().copied().collect();
    let throughput = log.throughput();
    let blocks = log.blocks_per_cycle();
    let pending = log.pending();
    let down = log.downtime_series();
    let entropy = compute_shuffle_entropy(log);
    let leaders = coalition_leader_series(log, &set);
    let held = if coalition.is_some() { coalition_control_series(log, &set) } else { vec![false; down.len()] };
    let rows: Vec<CycleRow> = (0..log.horizon() as usize)
        .map(|c| CycleRow {
            cycle: c as u64,
            submitted: log.submitted[c],
            finalized: throughput[c],
            blocks: blocks[c],
            pending: pending[c],
            down: down[c],
            shuffle_distance: entropy.series[c],
            coalition_leaders: leaders[c],
            coalition_control: held[c],
        })
        .collect();
    let summary = Summary {
        seed: log.seed,
        horizon: log.horizon(),
        nodes: log.nodes.len(),
        submitted: rows.iter().map(|r| r.submitted).sum(),
        finalized: rows.iter().map(|r| r.finalized).sum(),
        blocks: rows.iter().map(|r| r.blocks).sum(),
        downtime_cycles: rows.iter().filter(|r| r.down).count() as u64,
        epochs: log.epochs.len(),
        geneses: log.geneses.len(),
        violations: log.violations.len(),
        shuffle_distance_mean: entropy.mean,
        shuffle_samples: entropy.samples.len(),
        coalition: control,
        reshuffles: log
            .reshuffle_durations()
            .into_iter()
            .map(|(epoch, cycles)| ReshuffleRow { epoch, cycles })
            .collect(),
    };
    Ok(MetricsReport { rows, summary })
}

pub const CSV_HEADER: &str =
    "cycle,submitted,finalized,blocks,pending,down,shuffle_distance,coalition_leaders,coalition_control";

impl MetricsReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let distance = r.shuffle_distance.map(|d| format!("{d:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.cycle,
                r.submitted,
                r.finalized,
                r.blocks,
                r.pending,
                u8::from(r.down),
                distance,
                r.coalition_leaders,
                u8::from(r.coalition_control)
            );
        }
        out
    }

    pub fn summary_toml(&self) -> String {
        toml::to_string(&self.summary).expect("summary serializes")
    }
}

/// Writes `metrics.csv` and `summary.toml` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), report.csv())?;
    std::fs::write(dir.join("summary.toml"), report.summary_toml())
}
