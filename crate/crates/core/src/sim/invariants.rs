use std::collections::BTreeSet;

use super::runner::Simulation;
use crate::chain::StrandId;
use crate::topology::{carryover_check, NodeId};

/// End-of-run safety checks over the honest, running nodes.
pub fn check_invariants(sim: &Simulation) -> Vec<String> {
    let mut out = Vec::new();
    let honest = sim.honest_live();
    let engines = sim.engines();
    let heights = sim.recorded_heights();
    for &i in &honest {
        let e = &engines[i];
        let origin_hash = e.origin().hash();
        for s in StrandId::ALL {
            let mut parent = origin_hash;
            for (k, b) in e.chain(s).iter().enumerate() {
                let hash = b.hash();
                if b.header.parent_hash != parent || b.header.height != k as u64 + 1 {
                    out.push(format!("node {i}: broken link at {s}/{}", b.header.height));
                }
                if heights.get(&(s, b.header.height)) != Some(&hash) {
                    out.push(format!("node {i}: block {s}/{} differs from the recorded one", b.header.height));
                }
                parent = hash;
            }
        }
        let mut prior: BTreeSet<NodeId> = e.origin().members.iter().copied().collect();
        for g in e.geneses() {
            let Some(cfg) = g.header.new_configurations.values().next() else { continue };
            let next = cfg.member_set();
            if !carryover_check(&prior, &next).unwrap_or(false) {
                out.push(format!("node {i}: genesis {} breaks carryover", g.header.epoch));
            }
            prior = next;
        }
    }
    // every pair of honest nodes agrees on a common prefix of epoch-level blocks
    if let Some(&first) = honest.first() {
        let a = &engines[first];
        for &j in &honest[1..] {
            let b = &engines[j];
            let same_epochs = a.epochs().iter().zip(b.epochs()).all(|(x, y)| x.hash() == y.hash());
            let same_geneses = a.geneses().iter().zip(b.geneses()).all(|(x, y)| x.hash() == y.hash());
            if !same_epochs || !same_geneses {
                out.push(format!("nodes {first} and {j} disagree on epoch blocks"));
            }
        }
    }
    out
}
