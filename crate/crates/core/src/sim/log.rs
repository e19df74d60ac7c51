//! JSON-lines event log.
//!
//! Every line is one object with a format version `v` and a `kind`. The first
//! line is a `header` carrying the scenario and seed, the last an `end`
//! record; a log without `end` is truncated. Nodes are referred to by their
//! index in the header's `nodes` list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::chain::{BlockHash, StrandId};
use crate::digest::Digest32;
use crate::engine::StrandPhase;
use crate::topology::{KeyRangePartition, PartitionMode};

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxEntry {
    pub key: u64,
    pub digest: Digest32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleBlockRecord {
    pub tick: u64,
    pub strand: StrandId,
    pub height: u64,
    pub cycle: u64,
    pub hash: BlockHash,
    pub parent: BlockHash,
    pub proposer: u32,
    pub txs: Vec<Digest32>,
    pub signers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handover_signers: Option<Vec<u32>>,
    /// Ordered members of the configuration for the next block.
    pub configuration: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochBlockRecord {
    pub tick: u64,
    pub height: u64,
    pub cycle: u64,
    pub hash: BlockHash,
    pub proposer: u32,
    pub ascending: StrandId,
    pub descending: StrandId,
    pub next_members: Vec<u32>,
    pub ascending_signers: Vec<u32>,
    pub descending_signers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenesisBlockRecord {
    pub tick: u64,
    pub epoch: u64,
    pub cycle: u64,
    pub hash: BlockHash,
    pub parent: BlockHash,
    pub proposer: u32,
    pub configurations: BTreeMap<StrandId, Vec<u32>>,
    pub partition: KeyRangePartition,
    pub submissive_signers: Vec<u32>,
    pub dominant_signers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        seed: u64,
        scenario: Scenario,
        /// Short node ids by index.
        nodes: Vec<String>,
        /// Initial ordered configuration of each strand.
        configurations: BTreeMap<StrandId, Vec<u32>>,
    },
    Fault {
        tick: u64,
        node: u32,
        behavior: String,
    },
    Churn {
        tick: u64,
        node: u32,
        action: String,
    },
    Tx {
        tick: u64,
        cycle: u64,
        txs: Vec<TxEntry>,
    },
    /// State at the start of a cycle, as seen by the reference node.
    Cycle {
        tick: u64,
        cycle: u64,
        mode: PartitionMode,
        responsible: Vec<StrandId>,
        partition: KeyRangePartition,
        phases: BTreeMap<StrandId, StrandPhase>,
        leaders: BTreeMap<StrandId, u32>,
        pending: usize,
    },
    CycleBlock(CycleBlockRecord),
    EpochBlock(EpochBlockRecord),
    GenesisBlock(GenesisBlockRecord),
    Phase {
        tick: u64,
        node: u32,
        strand: StrandId,
        from: StrandPhase,
        to: StrandPhase,
    },
    Dkg {
        tick: u64,
        ritual: String,
        ok: bool,
        qualified: usize,
        threshold: usize,
    },
    Violation {
        tick: u64,
        what: String,
    },
    End {
        tick: u64,
        cycles: u64,
        violations: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    record: LogRecord,
}

pub fn encode_record(record: &LogRecord) -> String {
    serde_json::to_string(&Line { v: LOG_VERSION, record: record.clone() }).expect("log records serialize")
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unsupported log version {version}")]
    Version { line: usize, version: u32 },
    #[error("log is empty")]
    Empty,
    #[error("log does not start with a header")]
    MissingHeader,
    #[error("log is truncated: no end record")]
    Truncated,
}

/// Parses a whole log and checks its framing.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line =
            serde_json::from_str(raw).map_err(|e| LogError::Malformed { line: i + 1, message: e.to_string() })?;
        if line.v != LOG_VERSION {
            return Err(LogError::Version { line: i + 1, version: line.v });
        }
        out.push(line.record);
    }
    match out.first() {
        None => return Err(LogError::Empty),
        Some(LogRecord::Header { .. }) => {}
        Some(_) => return Err(LogError::MissingHeader),
    }
    if !matches!(out.last(), Some(LogRecord::End { .. })) {
        return Err(LogError::Truncated);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let header = LogRecord::Header {
            seed: 3,
            scenario: Scenario::default(),
            nodes: vec!["ab".into()],
            configurations: BTreeMap::new(),
        };
        let end = LogRecord::End { tick: 10, cycles: 1, violations: 0 };
        let text = format!("{}\n{}\n", encode_record(&header), encode_record(&end));
        assert!(text.starts_with("{\"v\":1,\"kind\":\"header\""));
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, vec![header.clone(), end]);
        let cut = format!("{}\n", encode_record(&header));
        assert!(matches!(parse_log(&cut), Err(LogError::Truncated)));
        assert!(matches!(
            parse_log("{\"v\":9,\"kind\":\"end\",\"tick\":1,\"cycles\":1,\"violations\":0}"),
            Err(LogError::Version { .. })
        ));
    }
}
