//! Multi-head graph attention network for node classification over a KNN
//! graph.

mod neighborhood;
mod train;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use neighborhood::{AttentionGraph, Block};
pub use train::{train_gat, write_history_csv, EpochRecord, GatTrainConfig, Prediction, RoleMasks};

use crate::autodiff::{
    glorot_uniform, BoundParams, Checkpoint, DenseLayer, EdgeIndex, ParamId, ParamStore, Tape,
    Tensor, Var,
};
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::matrix::FeatureMatrix;

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.2;

/// How a layer merges its heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Concatenate head outputs, then ReLU.
    Concat,
    /// Average head outputs, no activation.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub heads: usize,
    pub out_per_head: usize,
    pub combine: Combine,
}

impl LayerSpec {
    pub fn output_width(&self) -> usize {
        match self.combine {
            Combine::Concat => self.heads * self.out_per_head,
            Combine::Mean => self.out_per_head,
        }
    }
}

/// Layer stack and classifier shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatArchitecture {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub n_classes: usize,
    pub negative_slope: f64,
}

impl GatArchitecture {
    /// Two attention layers (4 heads of 8, concatenated; then 4 heads of 8,
    /// averaged) followed by a dense classifier.
    pub fn standard(input_dim: usize, n_classes: usize) -> Self {
        GatArchitecture {
            input_dim,
            layers: vec![
                LayerSpec {
                    heads: 4,
                    out_per_head: 8,
                    combine: Combine::Concat,
                },
                LayerSpec {
                    heads: 4,
                    out_per_head: 8,
                    combine: Combine::Mean,
                },
            ],
            n_classes,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes == 0 || self.layers.is_empty() {
            return Err(Error::Config(
                "GAT needs positive input width, classes and at least one layer".into(),
            ));
        }
        if self
            .layers
            .iter()
            .any(|l| l.heads == 0 || l.out_per_head == 0)
        {
            return Err(Error::Config(
                "GAT heads and per-head width must be ≥ 1".into(),
            ));
        }
        if !self.negative_slope.is_finite() {
            return Err(Error::Config("negative slope must be finite".into()));
        }
        Ok(())
    }
}

/// Parameters of one attention layer: per head a projection `W: [d_in × K]`
/// and an attention array `a = [a_dst ‖ a_src]` of length `2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub heads: usize,
    pub out_per_head: usize,
    pub d_in: usize,
    pub weights: Vec<ParamId>,
    pub attention: Vec<ParamId>,
    pub negative_slope: f64,
    pub combine: Combine,
}

impl GatLayerParams {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        spec: &LayerSpec,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let k = spec.out_per_head;
        let mut weights = Vec::with_capacity(spec.heads);
        let mut attention = Vec::with_capacity(spec.heads);
        for h in 0..spec.heads {
            weights.push(store.add(
                format!("{name}.head{h}.weight"),
                glorot_uniform(rng, &[d_in, k], d_in, k),
            ));
            attention.push(store.add(
                format!("{name}.head{h}.att"),
                glorot_uniform(rng, &[2 * k], 2 * k, 1),
            ));
        }
        GatLayerParams {
            heads: spec.heads,
            out_per_head: k,
            d_in,
            weights,
            attention,
            negative_slope: slope,
            combine: spec.combine,
        }
    }

    fn from_store(
        store: &ParamStore,
        name: &str,
        d_in: usize,
        spec: &LayerSpec,
        slope: f64,
    ) -> Result<Self> {
        let find = |key: String, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .find(&key)
                .ok_or_else(|| Error::Data(format!("missing parameter `{key}`")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Data(format!(
                    "parameter `{key}` has shape {:?}, expected {shape:?}",
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        let k = spec.out_per_head;
        let mut weights = Vec::with_capacity(spec.heads);
        let mut attention = Vec::with_capacity(spec.heads);
        for h in 0..spec.heads {
            weights.push(find(format!("{name}.head{h}.weight"), &[d_in, k])?);
            attention.push(find(format!("{name}.head{h}.att"), &[2 * k])?);
        }
        Ok(GatLayerParams {
            heads: spec.heads,
            out_per_head: k,
            d_in,
            weights,
            attention,
            negative_slope: slope,
            combine: spec.combine,
        })
    }

    pub fn output_width(&self) -> usize {
        match self.combine {
            Combine::Concat => self.heads * self.out_per_head,
            Combine::Mean => self.out_per_head,
        }
    }

    /// Records the layer on `tape`; returns the layer output and the
    /// per-head attention weights (one entry per edge of `edges`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Var,
        edges: &Arc<EdgeIndex>,
    ) -> Result<(Var, Vec<Var>)> {
        let shape = tape.value(x).shape();
        if shape.len() != 2 || shape[1] != self.d_in || shape[0] != edges.n_in() {
            return Err(Error::dim(
                "gat_layer_forward",
                format!("[{}×{}]", edges.n_in(), self.d_in),
                format!("{shape:?}"),
            ));
        }
        let mut outs = Vec::with_capacity(self.heads);
        let mut alphas = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let wh = tape.matmul(x, p.var(self.weights[h]))?;
            let scores = tape.edge_scores(wh, p.var(self.attention[h]), edges.clone())?;
            let scores = tape.leaky_relu(scores, self.negative_slope)?;
            let alpha = tape.segment_softmax(scores, edges.clone())?;
            outs.push(tape.aggregate(alpha, wh, edges.clone())?);
            alphas.push(alpha);
        }
        let out = match self.combine {
            Combine::Concat => {
                let joined = if outs.len() == 1 {
                    outs[0]
                } else {
                    tape.concat_cols(&outs)?
                };
                tape.relu(joined)?
            }
            Combine::Mean => {
                let mut acc = outs[0];
                for &o in &outs[1..] {
                    acc = tape.add(acc, o)?;
                }
                tape.scale(acc, 1.0 / self.heads as f64)
            }
        };
        Ok((out, alphas))
    }
}

/// Attention weights of node `i` over `[i, neighbours...]` for one head,
/// evaluated directly from feature rows.
///
/// `e_ij = LeakyReLU(a_dstᵀ W h_i + a_srcᵀ W h_j)`, softmax-normalised over
/// the neighbourhood. The first weight belongs to the self-loop.
pub fn attention_coefficients(
    h_i: &[f64],
    neighbors: &[&[f64]],
    weight: &Tensor,
    attention: &Tensor,
    negative_slope: f64,
) -> Result<Vec<f64>> {
    if weight.rank() != 2 || weight.rows() != h_i.len() || attention.len() != 2 * weight.cols() {
        return Err(Error::dim(
            "attention_coefficients",
            format!("W [{}×K] with a 2K attention array", h_i.len()),
            format!("{:?} and {:?}", weight.shape(), attention.shape()),
        ));
    }
    let k = weight.cols();
    let project = |h: &[f64]| -> Result<Vec<f64>> {
        if h.len() != weight.rows() {
            return Err(Error::dim("attention_coefficients", weight.rows(), h.len()));
        }
        Ok((0..k)
            .map(|c| {
                h.iter()
                    .enumerate()
                    .map(|(r, v)| v * weight.get2(r, c))
                    .sum()
            })
            .collect())
    };
    let (a_dst, a_src) = attention.data().split_at(k);
    let wi = project(h_i)?;
    let own: f64 = wi.iter().zip(a_dst).map(|(a, b)| a * b).sum();
    let mut logits = Vec::with_capacity(neighbors.len() + 1);
    for h_j in std::iter::once(h_i).chain(neighbors.iter().copied()) {
        let wj = project(h_j)?;
        let e = own + wj.iter().zip(a_src).map(|(a, b)| a * b).sum::<f64>();
        logits.push(if e >= 0.0 { e } else { negative_slope * e });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Attention layers followed by a dense classifier.
#[derive(Debug, Clone)]
pub struct GatModel {
    params: ParamStore,
    arch: GatArchitecture,
    layers: Vec<GatLayerParams>,
    classifier: DenseLayer,
}

impl GatModel {
    pub fn new<R: Rng + ?Sized>(arch: GatArchitecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(arch.layers.len());
        let mut width = arch.input_dim;
        for (i, spec) in arch.layers.iter().enumerate() {
            layers.push(GatLayerParams::new(
                &mut params,
                &format!("gat{i}"),
                width,
                spec,
                arch.negative_slope,
                rng,
            ));
            width = spec.output_width();
        }
        let classifier = DenseLayer::new(&mut params, "classifier", width, arch.n_classes, rng)?;
        Ok(GatModel {
            params,
            arch,
            layers,
            classifier,
        })
    }

    pub fn architecture(&self) -> &GatArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[GatLayerParams] {
        &self.layers
    }

    pub fn classifier(&self) -> &DenseLayer {
        &self.classifier
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn label_count(&self) -> usize {
        self.arch.n_classes
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Logits for the block's targets; `x` holds the features of `block.nodes`.
    pub fn forward_block(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Var,
        block: &Block,
    ) -> Result<Var> {
        let mut h = x;
        for (layer, edges) in self.layers.iter().zip(&block.layers) {
            h = layer.forward(tape, p, h, edges)?.0;
        }
        self.classifier.forward(tape, p, h)
    }

    fn block_features(&self, features: &FeatureMatrix, block: &Block) -> Result<Tensor> {
        if features.cols() != self.arch.input_dim {
            return Err(Error::dim(
                "gat_forward",
                format!("{} feature columns", self.arch.input_dim),
                features.cols(),
            ));
        }
        Ok(features.select_rows(&block.nodes)?.to_tensor())
    }

    fn check_graph(&self, graph: &AttentionGraph, features: &FeatureMatrix) -> Result<()> {
        if graph.node_count() != features.rows() {
            return Err(Error::dim(
                "gat_forward",
                format!("{} feature rows", graph.node_count()),
                features.rows(),
            ));
        }
        Ok(())
    }

    /// Classifier logits for every node, computed over the whole graph.
    pub fn logits(&self, graph: &KnnGraph, features: &FeatureMatrix) -> Result<Tensor> {
        let graph = AttentionGraph::from_knn(graph);
        self.check_graph(&graph, features)?;
        let block = Block::full(&graph, self.depth())?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(self.block_features(features, &block)?);
        let out = self.forward_block(&mut tape, &p, x, &block)?;
        Ok(tape.value(out).clone())
    }

    /// Output of attention layer `index` applied to `input` over the whole graph.
    pub fn layer_forward(&self, index: usize, input: &Tensor, graph: &KnnGraph) -> Result<Tensor> {
        Ok(self.layer_pass(index, input, graph)?.0)
    }

    /// Per-head attention weights of layer `index`, one per edge of the
    /// attention graph in [`AttentionGraph`] order.
    pub fn attention_weights(
        &self,
        index: usize,
        input: &Tensor,
        graph: &KnnGraph,
    ) -> Result<Vec<Vec<f64>>> {
        Ok(self.layer_pass(index, input, graph)?.1)
    }

    fn layer_pass(
        &self,
        index: usize,
        input: &Tensor,
        graph: &KnnGraph,
    ) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let layer = self.layers.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.layers.len(),
        })?;
        let edges = Arc::new(AttentionGraph::from_knn(graph).full_index()?);
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let (out, alphas) = layer.forward(&mut tape, &p, x, &edges)?;
        let alphas = alphas
            .into_iter()
            .map(|a| tape.value(a).data().to_vec())
            .collect();
        Ok((tape.value(out).clone(), alphas))
    }

    /// Class probabilities and argmax predictions for `node_ids`.
    pub fn predict(
        &self,
        graph: &KnnGraph,
        features: &FeatureMatrix,
        node_ids: &[usize],
    ) -> Result<Prediction> {
        let graph = AttentionGraph::from_knn(graph);
        self.check_graph(&graph, features)?;
        let n = graph.node_count();
        if let Some(&bad) = node_ids.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let mut unique = node_ids.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
        const CHUNK: usize = 4096;
        for chunk in unique.chunks(CHUNK) {
            let block = Block::build(&graph, chunk, self.depth())?;
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape, false);
            let x = tape.constant(self.block_features(features, &block)?);
            let logits = self.forward_block(&mut tape, &p, x, &block)?;
            let probs = tape.softmax_rows(logits)?;
            let probs = tape.value(probs);
            for (r, &node) in chunk.iter().enumerate() {
                rows[node] = Some(probs.row(r).to_vec());
            }
        }
        let probabilities: Vec<Vec<f64>> = node_ids
            .iter()
            .map(|&i| rows[i].clone().expect("computed above"))
            .collect();
        let classes = probabilities.iter().map(|p| argmax(p)).collect();
        Ok(Prediction {
            classes,
            probabilities,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: "gat".into(),
            meta: json!({ "architecture": self.arch }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("gat")?;
        let arch: GatArchitecture = serde_json::from_value(ckpt.meta["architecture"].clone())?;
        arch.validate()?;
        let params = ckpt.params.clone();
        let mut layers = Vec::with_capacity(arch.layers.len());
        let mut width = arch.input_dim;
        for (i, spec) in arch.layers.iter().enumerate() {
            layers.push(GatLayerParams::from_store(
                &params,
                &format!("gat{i}"),
                width,
                spec,
                arch.negative_slope,
            )?);
            width = spec.output_width();
        }
        let classifier = DenseLayer::from_store(&params, "classifier")?;
        if classifier.d_in != width || classifier.d_out != arch.n_classes {
            return Err(Error::Data(
                "classifier shape does not match the recorded architecture".into(),
            ));
        }
        Ok(GatModel {
            params,
            arch,
            layers,
            classifier,
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
