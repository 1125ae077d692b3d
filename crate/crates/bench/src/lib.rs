//! Shared fixtures for the pipeline benchmarks.

use ldp_range_core::{generate_synthetic, Dataset, SyntheticDist};

pub const BENCH_SEED: u64 = 0xBE7C;

/// A mid-size correlated dataset shared by the benchmarks.
pub fn bench_dataset(n: usize, d: usize, c: u32) -> Dataset {
    generate_synthetic(SyntheticDist::Normal, n, d, c, 0.8, BENCH_SEED).expect("valid parameters")
}
