use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

use super::scenario::Workload;
use crate::digest::{sha256, Digest32};
use crate::engine::Transaction;

fn unit(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Knuth's method, split into chunks so `exp(-rate)` never underflows.
pub fn poisson(rng: &mut ChaCha20Rng, rate: f64) -> u64 {
    let mut remaining = rate;
    let mut total = 0;
    while remaining > 0.0 {
        let chunk = remaining.min(30.0);
        remaining -= chunk;
        let limit = (-chunk).exp();
        let mut p = unit(rng);
        while p > limit {
            total += 1;
            p *= unit(rng);
        }
    }
    total
}

/// The batch submitted at the start of `cycle`.
pub fn generate_batch(
    workload: &Workload,
    rng: &mut ChaCha20Rng,
    seed: u64,
    cycle: u64,
    tick: u64,
) -> Vec<Transaction> {
    let count = match *workload {
        Workload::FixedPerCycle { count } => count,
        Workload::SeededPoisson { rate } => poisson(rng, rate),
    };
    (0..count)
        .map(|i| Transaction {
            key: rng.next_u64(),
            digest: Digest32(sha256(&[b"unitychain/tx", &seed.to_be_bytes(), &cycle.to_be_bytes(), &i.to_be_bytes()])),
            submitted_at: tick,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::SeedableRng;

    #[test]
    fn poisson_mean_is_close() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for rate in [0.5, 4.0, 75.0] {
            let n = 4000;
            let sum: u64 = (0..n).map(|_| poisson(&mut rng, rate)).sum();
            let mean = sum as f64 / n as f64;
            // 5 standard errors
            assert!((mean - rate).abs() < 5.0 * (rate / n as f64).sqrt(), "rate {rate}: mean {mean}");
        }
    }

    #[test]
    fn batches_are_reproducible() {
        let w = Workload::FixedPerCycle { count: 3 };
        let a = generate_batch(&w, &mut ChaCha20Rng::seed_from_u64(1), 1, 4, 400);
        let b = generate_batch(&w, &mut ChaCha20Rng::seed_from_u64(1), 1, 4, 400);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_ne!(a[0].digest, a[1].digest);
    }
}
