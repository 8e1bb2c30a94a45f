use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, per-class precision/recall/F1 and the confusion matrix
/// (rows = true class, columns = predicted class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub confusion: Vec<Vec<u64>>,
    /// Class was never predicted, so precision has a zero denominator.
    pub precision_degenerate: Vec<bool>,
    /// Class has no support, so recall has a zero denominator.
    pub recall_degenerate: Vec<bool>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

/// Builds the report for `label_count` classes. Zero-denominator metrics are
/// 0.0 and flagged.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    label_count: usize,
) -> Result<ClassificationReport> {
    let labels = (0..label_count).map(|i| format!("class {i}")).collect();
    classification_report_named(y_true, y_pred, labels)
}

pub fn classification_report_named(
    y_true: &[usize],
    y_pred: &[usize],
    labels: Vec<String>,
) -> Result<ClassificationReport> {
    let c = labels.len();
    if y_true.len() != y_pred.len() {
        return Err(Error::dim(
            "classification_report",
            format!("{} predictions", y_true.len()),
            y_pred.len(),
        ));
    }
    if c == 0 {
        return Err(Error::Config(
            "classification report needs at least one class".into(),
        ));
    }
    let mut confusion = vec![vec![0u64; c]; c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= c || p >= c {
            return Err(Error::IndexOutOfRange {
                index: t.max(p),
                len: c,
            });
        }
        confusion[t][p] += 1;
    }
    let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted: Vec<u64> = (0..c)
        .map(|j| confusion.iter().map(|row| row[j]).sum())
        .collect();
    let total: u64 = support.iter().sum();
    let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();

    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision: Vec<f64> = (0..c)
        .map(|i| ratio(confusion[i][i], predicted[i]))
        .collect();
    let recall: Vec<f64> = (0..c).map(|i| ratio(confusion[i][i], support[i])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| {
            if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            }
        })
        .collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / c as f64;
    let weighted = |v: &[f64]| {
        if total == 0 {
            0.0
        } else {
            v.iter()
                .zip(&support)
                .map(|(x, &s)| x * s as f64)
                .sum::<f64>()
                / total as f64
        }
    };
    Ok(ClassificationReport {
        labels,
        accuracy: ratio(trace, total),
        macro_avg: Averages {
            precision: mean(&precision),
            recall: mean(&recall),
            f1: mean(&f1),
        },
        weighted_avg: Averages {
            precision: weighted(&precision),
            recall: weighted(&recall),
            f1: weighted(&f1),
        },
        precision_degenerate: predicted.iter().map(|&p| p == 0).collect(),
        recall_degenerate: support.iter().map(|&s| s == 0).collect(),
        precision,
        recall,
        f1,
        support,
        confusion,
    })
}

impl ClassificationReport {
    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_degenerate(&self, class: usize) -> bool {
        self.precision_degenerate[class] || self.recall_degenerate[class]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned text table; degenerate cells are marked with `*`.
    pub fn to_table(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .chain(["weighted avg".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "", "precision", "recall", "f1-score", "support"
        );
        let cell = |v: f64, flag: bool| format!("{v:.4}{}", if flag { "*" } else { " " });
        for i in 0..self.label_count() {
            let _ = writeln!(
                out,
                "{:>width$}  {:>9}  {:>9}  {:>9}  {:>9}",
                self.labels[i],
                cell(self.precision[i], self.precision_degenerate[i]),
                cell(self.recall[i], self.recall_degenerate[i]),
                cell(self.f1[i], self.is_degenerate(i)),
                self.support[i]
            );
        }
        let total: u64 = self.support.iter().sum();
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$}  {:>9}  {:>9}  {:>9.4}   {:>9}",
            "accuracy", "", "", self.accuracy, total
        );
        for (name, avg) in [
            ("macro avg", self.macro_avg),
            ("weighted avg", self.weighted_avg),
        ] {
            let _ = writeln!(
                out,
                "{name:>width$}  {:>9.4}   {:>9.4}   {:>9.4}   {total:>9}",
                avg.precision, avg.recall, avg.f1
            );
        }
        if (0..self.label_count()).any(|i| self.is_degenerate(i)) {
            out.push_str("\n* zero denominator; reported as 0\n");
        }
        out
    }
}
