//! Shared fixtures for the benchmarks.

use maskdiff_core::probe::{sample_all_views, MaskedView, ProbeConfig};
use maskdiff_core::synthetic::{benchmark, Benchmark, SyntheticSpec};

/// Synthetic train/test split at the default generator settings.
pub fn synthetic(n_train: usize, n_test: usize) -> Benchmark {
    benchmark(&SyntheticSpec::default(), n_train, n_test, n_test).expect("valid synthetic spec")
}

/// Every probe view of one row, flattened.
pub fn views(x: &[u32], probe: &ProbeConfig) -> Vec<MaskedView> {
    sample_all_views(x, probe, 0)
        .expect("valid probe")
        .into_iter()
        .flatten()
        .collect()
}
