use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{FlowDataset, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Per-class counts `round(n·pᵢ)`, with any rounding remainder given to the
/// largest class.
pub(crate) fn class_sizes(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<i64> = proportions
        .iter()
        .map(|p| (n as f64 * p).round() as i64)
        .collect();
    let remainder = n as i64 - counts.iter().sum::<i64>();
    let largest =
        proportions.iter().enumerate().fold(
            0,
            |best, (i, &p)| if p > proportions[best] { i } else { best },
        );
    counts[largest] += remainder;
    counts.into_iter().map(|c| c.max(0) as usize).collect()
}

/// Imbalanced Gaussian-blob surrogate for a NetFlow corpus.
///
/// Each class gets a centre drawn from `N(0, separation²·I)`; instances are the
/// centre plus anisotropic noise whose per-feature standard deviation is drawn
/// once from `U[0.5, 1.5]`. Rows are shuffled so ids carry no class order.
pub fn synth_blobs(
    n: usize,
    proportions: &[f64],
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<FlowDataset> {
    if n < 1000 {
        return Err(Error::Config(format!(
            "synthetic corpus needs n ≥ 1000, got {n}"
        )));
    }
    if dim == 0 || proportions.is_empty() {
        return Err(Error::Config(
            "synthetic corpus needs dim ≥ 1 and at least one class".into(),
        ));
    }
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-6 || proportions.iter().any(|&p| p < 0.0) {
        return Err(Error::Config(format!(
            "class proportions must be non-negative and sum to 1, got {total}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::Config(format!(
            "separation must be finite and ≥ 0, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let centres: Vec<Vec<f64>> = proportions
        .iter()
        .map(|_| {
            (0..dim)
                .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let sizes = class_sizes(n, proportions);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for (class, &count) in sizes.iter().enumerate() {
        for _ in 0..count {
            let x = centres[class]
                .iter()
                .zip(&noise)
                .map(|(c, s)| c + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((x, class));
        }
    }
    rows.shuffle(&mut rng);

    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (x, y) in rows {
        data.extend(x);
        labels.push(y);
    }
    let label_names = if proportions.len() == CLASS_NAMES.len() {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..proportions.len())
            .map(|i| format!("class {i}"))
            .collect()
    };
    FlowDataset::new(
        FeatureMatrix::new(n, dim, data)?,
        labels,
        label_names,
        (0..dim).map(|i| format!("f{i}")).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CORPUS_PROPORTIONS;

    #[test]
    fn counts_follow_rounding_rule() {
        // 10 000·p = 8087, 1713, 141.8, 37.9, 20.3
        assert_eq!(
            class_sizes(10_000, &CORPUS_PROPORTIONS),
            vec![8087, 1713, 142, 38, 20]
        );
        let ds = synth_blobs(10_000, &CORPUS_PROPORTIONS, 4, 2.0, 1).unwrap();
        assert_eq!(ds.class_counts(), vec![8087, 1713, 142, 38, 20]);
    }

    #[test]
    fn remainder_goes_to_largest_class() {
        let sizes = class_sizes(1001, &[0.25, 0.5, 0.25]);
        assert_eq!(sizes.iter().sum::<usize>(), 1001);
        assert_eq!(sizes, vec![250, 501, 250]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_blobs(1000, &[0.5, 0.5], 3, 1.0, 9).unwrap();
        let b = synth_blobs(1000, &[0.5, 0.5], 3, 1.0, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_blobs(1000, &[0.5, 0.5], 3, 1.0, 10).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn proportions_must_sum_to_one() {
        assert!(matches!(
            synth_blobs(1000, &[0.5, 0.4], 3, 1.0, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            synth_blobs(999, &[1.0], 3, 1.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_separation_shares_one_centre() {
        let ds = synth_blobs(4000, &[0.5, 0.5], 2, 0.0, 5).unwrap();
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for (row, &y) in ds.features.iter_rows().zip(&ds.labels) {
            sums[y][0] += row[0];
            sums[y][1] += row[1];
            counts[y] += 1.0;
        }
        for c in 0..2 {
            assert!((sums[0][c] / counts[0] - sums[1][c] / counts[1]).abs() < 0.15);
        }
    }
}
