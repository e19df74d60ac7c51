//! Scenario files: flat TOML with `[[fault]]` and `[[churn]]` lists.
//!
//! ```toml
//! node_count = 8
//! horizon = 100
//! topology_shuffle = "every_5_epochs"
//! latency = "uniform"
//! latency_lo = 1
//! latency_hi = 10
//!
//! [[fault]]
//! node = 3
//! behavior = "silent"
//! from_cycle = 12
//! ```
//!
//! Missing keys take the values of [`Scenario::default`]. Every problem in a
//! file is reported, not just the first.

use std::collections::BTreeSet;
use std::fmt;

use toml::{Table, Value};

use crate::chain::{ShufflePolicy, StrandId};
use crate::sim::{ChurnAction, ChurnSpec, FaultKind, FaultSpec, LatencyModel, Scenario, Workload};
use crate::topology::{KeyRange, KeyRangePartition};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ScenarioErrors(pub Vec<String>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Reads keys out of one table and remembers which were used.
struct Fields<'a> {
    table: &'a Table,
    context: String,
    used: BTreeSet<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(table: &'a Table, context: impl Into<String>) -> Self {
        Fields { table, context: context.into(), used: BTreeSet::new() }
    }

    fn name(&self, key: &str) -> String {
        if self.context.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.context)
        }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn uint(&mut self, key: &'a str, errors: &mut Vec<String>) -> Option<u64> {
        match self.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(i) => {
                errors.push(format!("{}: must be non-negative, got {i}", self.name(key)));
                None
            }
            other => {
                errors.push(format!("{}: expected an integer, got {}", self.name(key), other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, key: &'a str, errors: &mut Vec<String>) -> Option<f64> {
        match self.get(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                errors.push(format!("{}: expected a number, got {}", self.name(key), other.type_str()));
                None
            }
        }
    }

    fn string(&mut self, key: &'a str, errors: &mut Vec<String>) -> Option<&'a str> {
        match self.get(key)? {
            Value::String(s) => Some(s),
            other => {
                errors.push(format!("{}: expected a string, got {}", self.name(key), other.type_str()));
                None
            }
        }
    }

    fn finish(self, errors: &mut Vec<String>) {
        for key in self.table.keys() {
            if !self.used.contains(key.as_str()) {
                errors.push(format!("unknown key {}", self.name(key)));
            }
        }
    }
}

fn parse_policy(text: &str) -> Option<ShufflePolicy> {
    match text {
        "every_cycle" => Some(ShufflePolicy::EveryCycle),
        "every_epoch" => Some(ShufflePolicy::EveryEpochs(1)),
        "never" => Some(ShufflePolicy::Never),
        _ => {
            let k = text.strip_prefix("every_")?.strip_suffix("_epochs")?.parse().ok()?;
            Some(ShufflePolicy::EveryEpochs(k))
        }
    }
}

/// Inverse of the policy names accepted in scenario files.
pub fn policy_name(policy: ShufflePolicy) -> String {
    match policy {
        ShufflePolicy::EveryCycle => "every_cycle".into(),
        ShufflePolicy::EveryEpochs(1) => "every_epoch".into(),
        ShufflePolicy::EveryEpochs(k) => format!("every_{k}_epochs"),
        ShufflePolicy::Never => "never".into(),
    }
}

/// Keys beyond `i64::MAX` are written as strings, decimal or `0x` hex.
fn parse_key(v: &Value) -> Option<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        Value::String(s) => match s.strip_prefix("0x") {
            Some(hex) => u64::from_str_radix(hex, 16).ok(),
            None => s.parse().ok(),
        },
        _ => None,
    }
}

fn parse_ranges(table: &Table, errors: &mut Vec<String>) -> Option<KeyRangePartition> {
    let mut assignments = Vec::new();
    for (name, v) in table {
        let strand = match name.as_str() {
            "positive" => StrandId::Positive,
            "negative" => StrandId::Negative,
            _ => {
                errors.push(format!("partition_ranges: unknown strand {name}"));
                continue;
            }
        };
        let Some(list) = v.as_array() else {
            errors.push(format!("partition_ranges.{name}: expected a list of [start, end] pairs"));
            continue;
        };
        let mut ranges = Vec::new();
        for item in list {
            match item.as_array().map(|a| a.iter().map(parse_key).collect::<Vec<_>>()).as_deref() {
                Some([Some(start), Some(end)]) => ranges.push(KeyRange { start: *start, end: *end }),
                _ => errors.push(format!("partition_ranges.{name}: bad range {item}")),
            }
        }
        assignments.push((strand, ranges));
    }
    Some(KeyRangePartition::ranges(assignments))
}

fn parse_fault(table: &Table, i: usize, errors: &mut Vec<String>) -> Option<FaultSpec> {
    let mut f = Fields::new(table, format!("fault[{i}]"));
    let node = f.uint("node", errors);
    let from_cycle = f.uint("from_cycle", errors).unwrap_or(0);
    let until_cycle = f.uint("until_cycle", errors);
    let behavior = f.string("behavior", errors);
    let kind = match behavior {
        Some("crash") => match f.uint("at_tick", errors) {
            Some(at_tick) => Some(FaultKind::Crash { at_tick }),
            None => {
                errors.push(format!("fault[{i}]: crash needs at_tick"));
                None
            }
        },
        Some("silent") => Some(FaultKind::Silent),
        Some("equivocate") => Some(FaultKind::Equivocate),
        Some("collude") => {
            let coalition = f.uint("coalition", errors).unwrap_or(0);
            Some(FaultKind::Collude { coalition: coalition as u32 })
        }
        Some(other) => {
            errors.push(format!("fault[{i}].behavior: unknown behavior {other:?}"));
            None
        }
        None => {
            errors.push(format!("fault[{i}]: missing behavior"));
            None
        }
    };
    if node.is_none() && !f.has("node") {
        errors.push(format!("fault[{i}]: missing node"));
    }
    f.finish(errors);
    Some(FaultSpec { node: node? as u32, kind: kind?, from_cycle, until_cycle })
}

fn parse_churn(table: &Table, i: usize, errors: &mut Vec<String>) -> Option<ChurnSpec> {
    let mut f = Fields::new(table, format!("churn[{i}]"));
    let cycle = f.uint("cycle", errors);
    let node = f.uint("node", errors);
    let action = match f.string("action", errors) {
        Some("join") => Some(ChurnAction::Join),
        Some("leave") => Some(ChurnAction::Leave),
        Some(other) => {
            errors.push(format!("churn[{i}].action: expected join or leave, got {other:?}"));
            None
        }
        None => None,
    };
    for key in ["cycle", "node", "action"] {
        if !f.has(key) {
            errors.push(format!("churn[{i}]: missing {key}"));
        }
    }
    f.finish(errors);
    Some(ChurnSpec { cycle: cycle?, node: node? as u32, action: action? })
}

fn tables<'a>(v: &'a Value, what: &str, errors: &mut Vec<String>) -> Vec<&'a Table> {
    match v {
        Value::Array(items) => items
            .iter()
            .filter_map(|item| {
                let t = item.as_table();
                if t.is_none() {
                    errors.push(format!("{what}: entries must be tables"));
                }
                t
            })
            .collect(),
        _ => {
            errors.push(format!("{what}: expected [[{what}]] entries"));
            Vec::new()
        }
    }
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ScenarioErrors(vec![e.to_string()]))?;
    let mut errors = Vec::new();
    let mut s = Scenario::default();
    let mut f = Fields::new(&table, "");

    let sizes: [(&str, &mut usize); 2] = [("node_count", &mut s.node_count), ("strand_count", &mut s.strand_count)];
    for (key, slot) in sizes {
        if let Some(v) = f.uint(key, &mut errors) {
            *slot = v as usize;
        }
    }
    if let Some(v) = f.uint("join_threshold", &mut errors) {
        s.join_threshold = v as usize;
    }
    let counts: [(&str, &mut u64); 4] = [
        ("cycles_per_epoch", &mut s.cycles_per_epoch),
        ("reshuffle_duration", &mut s.reshuffle_duration),
        ("cycle_ticks", &mut s.cycle_ticks),
        ("horizon", &mut s.horizon),
    ];
    for (key, slot) in counts {
        if let Some(v) = f.uint(key, &mut errors) {
            *slot = v;
        }
    }
    s.seed = f.uint("seed", &mut errors);

    if let Some(name) = f.string("topology_shuffle", &mut errors) {
        match parse_policy(name) {
            Some(p) => s.topology_shuffle = p,
            None => errors.push(format!(
                "topology_shuffle: expected every_cycle, every_epoch, every_<k>_epochs or never, got {name:?}"
            )),
        }
    }

    let lo = f.uint("latency_lo", &mut errors);
    let hi = f.uint("latency_hi", &mut errors);
    let ticks = f.uint("latency_ticks", &mut errors);
    match f.string("latency", &mut errors).unwrap_or("uniform") {
        "uniform" => {
            if ticks.is_some() {
                errors.push("latency_ticks only applies to fixed latency".into());
            }
            let (dlo, dhi) = s.latency.bounds();
            s.latency = LatencyModel::UniformRange { lo: lo.unwrap_or(dlo), hi: hi.unwrap_or(dhi) };
        }
        "fixed" => {
            if lo.is_some() || hi.is_some() {
                errors.push("latency_lo and latency_hi only apply to uniform latency".into());
            }
            match ticks {
                Some(ticks) => s.latency = LatencyModel::Fixed { ticks },
                None => errors.push("fixed latency needs latency_ticks".into()),
            }
        }
        other => errors.push(format!("latency: expected uniform or fixed, got {other:?}")),
    }

    let per_cycle = f.uint("tx_per_cycle", &mut errors);
    let rate = f.float("tx_rate", &mut errors);
    match f.string("workload", &mut errors).unwrap_or("fixed") {
        "fixed" => {
            if rate.is_some() {
                errors.push("tx_rate only applies to the poisson workload".into());
            }
            if let Some(count) = per_cycle {
                s.workload = Workload::FixedPerCycle { count };
            }
        }
        "poisson" => {
            if per_cycle.is_some() {
                errors.push("tx_per_cycle only applies to the fixed workload".into());
            }
            match rate {
                Some(rate) => s.workload = Workload::SeededPoisson { rate },
                None => errors.push("poisson workload needs tx_rate".into()),
            }
        }
        other => errors.push(format!("workload: expected fixed or poisson, got {other:?}")),
    }

    let parity = f.string("partition", &mut errors);
    let ranges = f.get("partition_ranges");
    match (parity, ranges) {
        (Some(_), Some(_)) => errors.push("declare exactly one of partition and partition_ranges".into()),
        (Some("parity"), None) | (None, None) => s.partition = KeyRangePartition::parity(),
        (Some(other), None) => errors.push(format!("partition: only \"parity\" is named, got {other:?}")),
        (None, Some(Value::Table(t))) => {
            if let Some(p) = parse_ranges(t, &mut errors) {
                s.partition = p;
            }
        }
        (None, Some(_)) => errors.push("partition_ranges: expected a table of strands".into()),
    }

    if let Some(v) = f.get("coalition") {
        match v.as_array() {
            Some(items) => {
                for item in items {
                    match item.as_integer() {
                        Some(n) if n >= 0 => s.coalition.push(n as u32),
                        _ => errors.push(format!("coalition: bad node id {item}")),
                    }
                }
            }
            None => errors.push("coalition: expected a list of node ids".into()),
        }
    }
    if let Some(v) = f.get("fault") {
        for (i, t) in tables(v, "fault", &mut errors).into_iter().enumerate() {
            if let Some(spec) = parse_fault(t, i, &mut errors) {
                s.faults.push(spec);
            }
        }
    }
    if let Some(v) = f.get("churn") {
        for (i, t) in tables(v, "churn", &mut errors).into_iter().enumerate() {
            if let Some(spec) = parse_churn(t, i, &mut errors) {
                s.churn.push(spec);
            }
        }
    }
    f.finish(&mut errors);

    errors.extend(s.validate());
    if errors.is_empty() {
        Ok(s)
    } else {
        Err(ScenarioErrors(errors))
    }
}
