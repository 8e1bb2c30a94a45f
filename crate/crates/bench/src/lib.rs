//! Shared fixtures for the stage benchmarks.

use flowgat_core::dataset::synth_blobs;
use flowgat_core::FeatureMatrix;

/// Reduced-space stand-in: `n` points in 8 dimensions over five imbalanced classes.
pub fn latent_fixture(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let ds = synth_blobs(n, &[0.6, 0.25, 0.1, 0.03, 0.02], 8, 2.0, seed).expect("valid fixture");
    (ds.features, ds.labels)
}
