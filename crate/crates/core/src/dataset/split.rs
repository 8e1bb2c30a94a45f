use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            test_fraction: 0.20,
            val_fraction_of_train: 0.10,
            seed,
            stratify: false,
        }
    }
}

/// Disjoint, exhaustive train/validation/test node ids, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn sizes(n: usize, spec: &SplitSpec) -> (usize, usize) {
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    let n_val = ((n - n_test) as f64 * spec.val_fraction_of_train).round() as usize;
    (n_test, n_val)
}

/// Seeded random split of `labels.len()` instances.
///
/// `test = round(N·test_fraction)`, `val = round((N − test)·val_fraction)`,
/// train takes the rest. With `stratify` the same rule is applied per class.
pub fn split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    let n = labels.len();
    for (name, f) in [
        ("test_fraction", spec.test_fraction),
        ("val_fraction_of_train", spec.val_fraction_of_train),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    if n < 10 {
        return Err(Error::Config(format!(
            "need at least 10 instances to split, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());

    let groups: Vec<Vec<usize>> = if spec.stratify {
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut g = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    } else {
        vec![(0..n).collect()]
    };

    for mut ids in groups {
        ids.shuffle(&mut rng);
        let (n_test, n_val) = sizes(ids.len(), spec);
        test.extend_from_slice(&ids[..n_test]);
        val.extend_from_slice(&ids[n_test..n_test + n_val]);
        train.extend_from_slice(&ids[n_test + n_val..]);
    }
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "split of {n} instances leaves an empty set (train {}, val {}, test {})",
            train.len(),
            val.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        seed: spec.seed,
        train,
        val,
        test,
    })
}
