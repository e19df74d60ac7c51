//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns plain strings (JSON out) so the page needs
//! no generated glue beyond what `wasm-bindgen` emits. The `*_json` functions
//! are the same operations without the JS types, for native callers and tests.

use serde_json::{json, Value};
use unitychain::chain::StrandId;
use unitychain::crypto::{GroupParams, VrfSeed};
use unitychain::digest::sha256;
use unitychain::metrics::{build_report, parse_scenario, RunLog};
use unitychain::sim::run_simulation;
use unitychain::topology::{route_key, shuffle_members, KeyRange, KeyRangePartition, NodeId};
use wasm_bindgen::prelude::*;

pub const MAX_SHUFFLE_NODES: usize = 32;
pub const MAX_SAMPLES: u32 = 200_000;

/// `counts[node][slot]` over `samples` shuffles of `n` nodes.
pub fn shuffle_histogram_json(n: usize, samples: u32, seed: u64) -> Result<String, String> {
    if n == 0 || n > MAX_SHUFFLE_NODES {
        return Err(format!("node count must be in 1..={MAX_SHUFFLE_NODES}"));
    }
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(format!("samples must be in 1..={MAX_SAMPLES}"));
    }
    let params = GroupParams::default();
    let members: Vec<NodeId> = (0..n as u32).map(|i| NodeId::derive(i, &params)).collect();
    let mut counts = vec![vec![0u32; n]; n];
    let mut last = Vec::new();
    for i in 0..samples {
        let vrf = VrfSeed(sha256(&[&seed.to_be_bytes(), &i.to_be_bytes()]));
        let order = shuffle_members(&members, &vrf);
        for (slot, m) in order.iter().enumerate() {
            let node = members.iter().position(|x| x == m).unwrap();
            counts[node][slot] += 1;
        }
        if i + 1 == samples {
            last = order.iter().map(|m| members.iter().position(|x| x == m).unwrap()).collect();
        }
    }
    Ok(json!({ "n": n, "samples": samples, "counts": counts, "last": last }).to_string())
}

/// Owner of `key` under the parity split and under a two-range split at
/// `boundary` (keys below it go to the positive strand).
pub fn route_json(key: &str, boundary: &str) -> Result<String, String> {
    let key = parse_u64(key)?;
    let boundary = parse_u64(boundary)?;
    let ranges = if boundary == 0 {
        KeyRangePartition::full(StrandId::Negative)
    } else {
        KeyRangePartition::ranges([
            (StrandId::Positive, vec![KeyRange { start: 0, end: boundary - 1 }]),
            (StrandId::Negative, vec![KeyRange { start: boundary, end: u64::MAX }]),
        ])
    };
    Ok(json!({
        "key": key.to_string(),
        "parity": route_key(key, &KeyRangePartition::parity()).to_string(),
        "ranges": route_key(key, &ranges).to_string(),
    })
    .to_string())
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("not a 64-bit key: {s:?}"))
}

/// Run a scenario given as TOML and return a per-cycle timeline.
pub fn simulate_json(scenario_toml: &str, seed: u64) -> Result<String, String> {
    let scenario = parse_scenario(scenario_toml).map_err(|e| e.to_string())?;
    let outcome = run_simulation(&scenario, seed).map_err(|e| e.to_string())?;
    let log = RunLog::parse(&outcome.log_text()).map_err(|e| e.to_string())?;
    let coalition = (!scenario.coalition.is_empty()).then_some(&scenario.coalition[..]);
    let report = build_report(&log, coalition).map_err(|e| e.to_string())?;
    let blocks: Vec<Value> = log
        .cycle_blocks
        .iter()
        .map(
            |b| json!({ "cycle": b.cycle, "strand": b.strand.to_string(), "height": b.height, "proposer": b.proposer }),
        )
        .collect();
    let epochs: Vec<u64> = log.epochs.iter().map(|e| e.cycle).collect();
    let geneses: Vec<u64> = log.geneses.iter().map(|g| g.cycle).collect();
    Ok(json!({
        "summary": report.summary,
        "rows": report.rows,
        "blocks": blocks,
        "epochs": epochs,
        "geneses": geneses,
        "violations": log.violations,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn shuffle_histogram(n: usize, samples: u32, seed: u64) -> Result<String, JsValue> {
    shuffle_histogram_json(n, samples, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn route(key: &str, boundary: &str) -> Result<String, JsValue> {
    route_json(key, boundary).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(scenario_toml: &str, seed: u64) -> Result<String, JsValue> {
    simulate_json(scenario_toml, seed).map_err(|e| JsValue::from_str(&e))
}
