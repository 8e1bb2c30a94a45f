use std::collections::HashMap;
use std::sync::Arc;

use crate::autodiff::EdgeIndex;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;

/// Attention neighbourhoods: each node's KNN neighbours with the node itself
/// prepended. Self-loops exist only here, never in the stored graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGraph {
    offsets: Vec<usize>,
    sources: Vec<usize>,
}

impl AttentionGraph {
    pub fn from_knn(graph: &KnnGraph) -> Self {
        let n = graph.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut sources = Vec::with_capacity(graph.neighbor_array().len() + n);
        offsets.push(0);
        for u in 0..n {
            sources.push(u);
            sources.extend(graph.neighbors(u).iter().copied().filter(|&v| v != u));
            offsets.push(sources.len());
        }
        AttentionGraph { offsets, sources }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }

    /// `[i, neighbours of i...]`.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Edge index over the whole graph, in node order.
    pub fn full_index(&self) -> Result<EdgeIndex> {
        EdgeIndex::new(
            self.offsets.clone(),
            self.sources.clone(),
            self.node_count(),
        )
    }
}

/// Receptive field of a set of target nodes for a stack of message-passing
/// layers.
///
/// `nodes` lists the nodes whose input features are needed, targets first,
/// then nodes one hop out, and so on; every hop set is a prefix of the next.
/// `layers[l]` maps the rows of hop set `depth - l` onto hop set
/// `depth - l - 1`, so the final layer's output rows are the targets in
/// order.
#[derive(Debug, Clone)]
pub struct Block {
    pub nodes: Vec<usize>,
    pub layers: Vec<Arc<EdgeIndex>>,
}

impl Block {
    pub fn build(graph: &AttentionGraph, targets: &[usize], depth: usize) -> Result<Self> {
        let n = graph.node_count();
        let mut local: HashMap<usize, usize> = HashMap::with_capacity(targets.len() * 8);
        let mut nodes = Vec::with_capacity(targets.len() * 8);
        for &t in targets {
            if t >= n {
                return Err(Error::IndexOutOfRange { index: t, len: n });
            }
            if local.insert(t, nodes.len()).is_some() {
                return Err(Error::Contract(format!("target node {t} listed twice")));
            }
            nodes.push(t);
        }
        let mut sizes = vec![nodes.len()];
        let mut expanded = 0;
        for _ in 0..depth {
            let end = nodes.len();
            for pos in expanded..end {
                for &v in graph.neighborhood(nodes[pos]) {
                    if let std::collections::hash_map::Entry::Vacant(e) = local.entry(v) {
                        e.insert(nodes.len());
                        nodes.push(v);
                    }
                }
            }
            expanded = end;
            sizes.push(nodes.len());
        }
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let (n_out, n_in) = (sizes[depth - l - 1], sizes[depth - l]);
            let mut offsets = Vec::with_capacity(n_out + 1);
            let mut sources = Vec::new();
            offsets.push(0);
            for &u in &nodes[..n_out] {
                sources.extend(graph.neighborhood(u).iter().map(|v| local[v]));
                offsets.push(sources.len());
            }
            layers.push(Arc::new(EdgeIndex::new(offsets, sources, n_in)?));
        }
        Ok(Block { nodes, layers })
    }

    /// Block whose hop sets are all nodes in natural order.
    pub fn full(graph: &AttentionGraph, depth: usize) -> Result<Self> {
        let index = Arc::new(graph.full_index()?);
        Ok(Block {
            nodes: (0..graph.node_count()).collect(),
            layers: vec![index; depth],
        })
    }
}
