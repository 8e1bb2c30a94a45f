use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, AttentionGraph, Block, GatArchitecture, GatModel};
use crate::autodiff::{AdamState, Tape};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::matrix::FeatureMatrix;

/// Train / validation / test node ids; a partition of all nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl RoleMasks {
    pub fn new(
        node_count: usize,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let mut seen = vec![false; node_count];
        for &i in train.iter().chain(&val).chain(&test) {
            if i >= node_count {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: node_count,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract(format!(
                    "node {i} appears in more than one role"
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Contract(format!("node {missing} has no role")));
        }
        Ok(RoleMasks { train, val, test })
    }

    pub fn from_split(node_count: usize, split: &Split) -> Result<Self> {
        RoleMasks::new(
            node_count,
            split.train.clone(),
            split.val.clone(),
            split.test.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Per-class loss weights; `None` weighs every node equally.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for GatTrainConfig {
    fn default() -> Self {
        GatTrainConfig {
            epochs: 20,
            batch_size: 128,
            lr: 0.001,
            seed: 0,
            class_weights: None,
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    /// Softmax rows, aligned with `classes`.
    pub probabilities: Vec<Vec<f64>>,
}

/// Trains a GAT with masked cross-entropy over batches of training target nodes.
///
/// Each batch computes logits for its targets over their full receptive
/// field in the graph, which gives the same loss and gradients as a
/// whole-graph forward masked to the batch.
pub fn train_gat(
    graph: &KnnGraph,
    features: &FeatureMatrix,
    labels: &[usize],
    masks: &RoleMasks,
    arch: GatArchitecture,
    cfg: &GatTrainConfig,
) -> Result<(GatModel, Vec<EpochRecord>)> {
    let n = graph.node_count();
    if features.rows() != n || labels.len() != n {
        return Err(Error::dim(
            "train_gat",
            format!("{n} feature rows and labels"),
            format!("{} rows, {} labels", features.rows(), labels.len()),
        ));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(
            "batch size must be positive and learning rate finite and ≥ 0".into(),
        ));
    }
    if masks.train.is_empty() {
        return Err(Error::Config("no training nodes".into()));
    }
    let classes = arch.n_classes;
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: classes,
        });
    }
    let weights: Option<Arc<[f64]>> = match &cfg.class_weights {
        Some(w) if w.len() != classes => {
            return Err(Error::Config(format!(
                "{} class weights for {classes} classes",
                w.len()
            )))
        }
        Some(w) if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
            return Err(Error::Config(
                "class weights must be finite and non-negative".into(),
            ))
        }
        Some(w) => Some(w.as_slice().into()),
        None => None,
    };
    let train_counts = crate::dataset::class_counts(
        &masks.train.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        classes,
    );
    for (c, &count) in train_counts.iter().enumerate() {
        if count == 0 {
            log::warn!("class {c} has no training nodes; its metrics will be zero");
        }
    }

    let graph = AttentionGraph::from_knn(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GatModel::new(arch, &mut rng)?;
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut order = masks.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let block = Block::build(&graph, batch, model.depth())?;
            let targets: Arc<[usize]> = batch.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape, true);
            let x = tape.constant(features.select_rows(&block.nodes)?.to_tensor());
            let logits = model.forward_block(&mut tape, &p, x, &block)?;
            let loss = tape.softmax_cross_entropy(logits, targets.clone(), weights.clone())?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    model: "gat",
                    epoch,
                });
            }
            loss_sum += value * batch.len() as f64;
            let out = tape.value(logits);
            correct += (0..batch.len())
                .filter(|&r| argmax(out.row(r)) == targets[r])
                .count();
            let mut grads = tape.backward(loss)?;
            let grads = p.collect(&model.params, &mut grads);
            adam.step(&mut model.params, &grads)?;
        }
        let (val_loss, val_acc) = match evaluate(
            &model,
            &graph,
            features,
            labels,
            &masks.val,
            weights.clone(),
        )? {
            Some((l, a)) => (Some(l), Some(a)),
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "gat epoch {epoch}: train loss {:.4} acc {:.4}, val acc {}",
            record.train_loss,
            record.train_acc,
            val_acc.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        history.push(record);
    }
    Ok((model, history))
}

/// Mean loss and accuracy over `ids`, or `None` when `ids` is empty.
fn evaluate(
    model: &GatModel,
    graph: &AttentionGraph,
    features: &FeatureMatrix,
    labels: &[usize],
    ids: &[usize],
    weights: Option<Arc<[f64]>>,
) -> Result<Option<(f64, f64)>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let (mut loss_sum, mut weight_sum, mut correct) = (0.0, 0.0, 0usize);
    for chunk in ids.chunks(4096) {
        let block = Block::build(graph, chunk, model.depth())?;
        let targets: Arc<[usize]> = chunk.iter().map(|&i| labels[i]).collect();
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape, false);
        let x = tape.constant(features.select_rows(&block.nodes)?.to_tensor());
        let logits = model.forward_block(&mut tape, &p, x, &block)?;
        let loss = tape.softmax_cross_entropy(logits, targets.clone(), weights.clone())?;
        let chunk_weight: f64 = targets
            .iter()
            .map(|&y| weights.as_ref().map_or(1.0, |w| w[y]))
            .sum();
        loss_sum += tape.value(loss).data()[0] * chunk_weight;
        weight_sum += chunk_weight;
        let out = tape.value(logits);
        correct += (0..chunk.len())
            .filter(|&r| argmax(out.row(r)) == targets[r])
            .count();
    }
    let loss = if weight_sum > 0.0 {
        loss_sum / weight_sum
    } else {
        0.0
    };
    Ok(Some((loss, correct as f64 / ids.len() as f64)))
}

/// Writes `epoch,train_loss,train_acc,val_loss,val_acc`; absent validation
/// values are left empty.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            opt(r.val_loss),
            opt(r.val_acc)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_knn_graph, Metric};

    fn two_clusters() -> (KnnGraph, FeatureMatrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let base = if c == 0 { -2.0 } else { 2.0 };
            rows.push(vec![
                base + (i as f64 * 0.37).sin() * 0.3,
                base + (i as f64 * 0.91).cos() * 0.3,
            ]);
            labels.push(c);
        }
        let feats = FeatureMatrix::from_rows(&rows).unwrap();
        let g = build_knn_graph(&feats, 3, Metric::Euclidean).unwrap();
        (g, feats, labels)
    }

    fn masks() -> RoleMasks {
        RoleMasks::new(
            60,
            (0..40).collect(),
            (40..50).collect(),
            (50..60).collect(),
        )
        .unwrap()
    }

    #[test]
    fn masks_must_partition() {
        assert!(RoleMasks::new(3, vec![0], vec![0], vec![1, 2]).is_err());
        assert!(RoleMasks::new(3, vec![0], vec![1], vec![]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (g, x, y) = two_clusters();
        let arch = GatArchitecture::standard(2, 2);
        let cfg = GatTrainConfig {
            lr: 0.0,
            epochs: 2,
            batch_size: 16,
            ..Default::default()
        };
        let (trained, _) = train_gat(&g, &x, &y, &masks(), arch.clone(), &cfg).unwrap();
        let fresh = GatModel::new(arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(trained.params(), fresh.params());
    }

    #[test]
    fn same_seed_same_history() {
        let (g, x, y) = two_clusters();
        let cfg = GatTrainConfig {
            epochs: 3,
            batch_size: 16,
            lr: 0.01,
            ..Default::default()
        };
        let a = train_gat(&g, &x, &y, &masks(), GatArchitecture::standard(2, 2), &cfg)
            .unwrap()
            .1;
        let b = train_gat(&g, &x, &y, &masks(), GatArchitecture::standard(2, 2), &cfg)
            .unwrap()
            .1;
        assert_eq!(a, b);
        assert!(a.last().unwrap().train_loss <= a[0].train_loss);
    }
}
