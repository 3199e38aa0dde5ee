//! Synthetic inputs shared by the benchmarks.

use bhplus_core::CountRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `m` Poisson-like count pairs in the methylation filter range (total
/// above 10, each count at most 25), with a tenth of them shifted.
pub fn methylation_like(m: usize, seed: u64) -> Vec<CountRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|i| {
            let c1 = rng.random_range(3..=25u64);
            let c2 = if i % 10 == 0 {
                rng.random_range(0..=c1 / 3)
            } else {
                rng.random_range(c1.saturating_sub(4)..=(c1 + 4).min(25))
            };
            let c2 = if c1 + c2 <= 10 { 11 - c1 } else { c2 };
            CountRecord {
                id: format!("r{i}"),
                c1,
                c2,
                n1: None,
                n2: None,
            }
        })
        .collect()
}
