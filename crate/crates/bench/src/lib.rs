//! Fixtures shared by the benchmarks.

use filtra_core::pipeline::PipelineConfig;
use filtra_core::simgen::{gen_dataset, SimConfig};
use filtra_core::{Dataset, PreparedData};

/// Strong-decay synthetic training set.
pub fn dataset(n: usize, seed: u64) -> Dataset {
    let cfg = SimConfig { n_samples: n, seed, ..SimConfig::default() };
    gen_dataset(&cfg).expect("valid simulation config").data
}

pub fn prepared(n: usize, seed: u64) -> PreparedData {
    PreparedData::new(&dataset(n, seed)).expect("non-degenerate data")
}

/// Pipeline settings small enough for repeated timing.
pub fn quick_pipeline(splits: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.mccv.n_splits = splits;
    cfg
}
