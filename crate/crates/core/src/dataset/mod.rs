//! NetFlow dataset ingestion, scaling, splitting and the synthetic surrogate corpus.

mod io;
mod scaler;
mod split;
mod synth;

pub use io::{
    load_netflow_csv, read_labeled_csv, read_matrix_bin, write_labeled_csv, write_matrix_bin,
    write_netflow_csv, LoadOptions, LoadReport,
};
pub use scaler::{Scaler, Standardizer};
pub use split::{split, Split, SplitSpec};
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Class names in label-index order.
pub const CLASS_NAMES: [&str; 5] = [
    "Normal",
    "HTTP flood",
    "TCP flood",
    "Brute force",
    "UDP flood",
];

/// Class shares of the CICIoT2022 NetFlow export.
pub const CORPUS_PROPORTIONS: [f64; 5] = [0.80870, 0.17130, 0.01418, 0.00379, 0.00203];

/// Per-class instance counts of the full CICIoT2022 NetFlow export.
pub const CORPUS_CLASS_COUNTS: [usize; 5] = [2_616_853, 554_316, 45_884, 12_257, 6_561];

/// Bijective mapping between class names and label indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap {
            names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn normalize(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| {
            if c == '_' || c == '-' {
                ' '
            } else {
                c.to_ascii_lowercase()
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(normalize(n)) {
                return Err(Error::Config(format!("duplicate class name `{n}`")));
            }
        }
        Ok(LabelMap { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// Looks up a class by name, ignoring case and treating `_`, `-` and
    /// spaces alike (so `tcp_flood` resolves to `TCP flood`).
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let key = normalize(name);
        self.names.iter().position(|n| normalize(n) == key)
    }
}

/// Cleaned, labelled flow instances.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl FlowDataset {
    pub fn new(
        features: FeatureMatrix,
        labels: Vec<usize>,
        label_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dim(
                "FlowDataset::new",
                format!("{} labels", features.rows()),
                labels.len(),
            ));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::dim(
                "FlowDataset::new",
                format!("{} feature names", features.cols()),
                feature_names.len(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::Data(format!(
                "label index {bad} outside {} classes",
                label_names.len()
            )));
        }
        if !features.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(FlowDataset {
            features,
            labels,
            label_names,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.label_names.len())
    }
}

pub fn class_counts(labels: &[usize], label_count: usize) -> Vec<usize> {
    let mut counts = vec![0; label_count];
    for &l in labels {
        if l < label_count {
            counts[l] += 1;
        }
    }
    counts
}

/// Checks a full corpus export against the published per-class flow counts,
/// matching classes by name.
pub fn check_corpus_counts(dataset: &FlowDataset) -> Result<()> {
    let counts = dataset.class_counts();
    let mut mismatches = Vec::new();
    for (name, &want) in CLASS_NAMES.iter().zip(&CORPUS_CLASS_COUNTS) {
        let got = dataset
            .label_names
            .iter()
            .position(|n| n == name)
            .map_or(0, |i| counts[i]);
        if got != want {
            mismatches.push(format!("{name}: {got} (expected {want})"));
        }
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "class counts differ from the corpus: {}",
            mismatches.join(", ")
        )))
    }
}
