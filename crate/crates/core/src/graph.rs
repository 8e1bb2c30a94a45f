//! Exact KNN graph construction over reduced instances, stored as CSR.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Norms at or below this are rejected under the cosine metric.
pub const COSINE_MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Euclidean, Metric::Cosine];

    fn code(self) -> u8 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Metric::Euclidean),
            1 => Ok(Metric::Cosine),
            other => Err(Error::Data(format!("unknown metric code {other}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "eucl" => Ok(Metric::Euclidean),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected euclidean or cosine)"
            ))),
        }
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cosine_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Distance between two instances: Euclidean, or `1 − cos(a, b)` in `[0, 2]`.
pub fn pairwise_distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("pairwise_distance", a.len(), b.len()));
    }
    match metric {
        Metric::Euclidean => Ok(euclidean(a, b)),
        Metric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            let bad: Vec<usize> = [na, nb]
                .iter()
                .enumerate()
                .filter(|(_, &n)| n <= COSINE_MIN_NORM)
                .map(|(i, _)| i)
                .collect();
            if !bad.is_empty() {
                return Err(Error::DegenerateVector { rows: bad });
            }
            Ok(cosine_with_norms(a, b, na, nb))
        }
    }
}

/// Undirected (after symmetrisation) KNN graph in CSR form. Self-edges are
/// never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    metric: Metric,
    k: usize,
    symmetrized: bool,
}

impl KnnGraph {
    /// Validates and wraps raw CSR arrays.
    pub fn from_csr(
        offsets: Vec<usize>,
        neighbors: Vec<usize>,
        metric: Metric,
        k: usize,
        symmetrized: bool,
    ) -> Result<Self> {
        if offsets.first() != Some(&0) || offsets.last() != Some(&neighbors.len()) {
            return Err(Error::Data(
                "CSR offsets must start at 0 and end at the neighbor count".into(),
            ));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Data("CSR offsets must be non-decreasing".into()));
        }
        let n = offsets.len() - 1;
        for u in 0..n {
            let list = &neighbors[offsets[u]..offsets[u + 1]];
            let mut seen = HashSet::with_capacity(list.len());
            for &v in list {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
                if v == u {
                    return Err(Error::Data(format!("self-edge stored at node {u}")));
                }
                if !seen.insert(v) {
                    return Err(Error::Data(format!("duplicate neighbor {v} at node {u}")));
                }
            }
        }
        let g = KnnGraph {
            offsets,
            neighbors,
            metric,
            k,
            symmetrized,
        };
        if symmetrized && !g.is_symmetric() {
            return Err(Error::Data(
                "graph flagged symmetrized but adjacency is not symmetric".into(),
            ));
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).contains(&v)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.node_count()).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }

    /// Unordered edge pairs `(u, v)` with `u < v`, sorted.
    pub fn edge_set(&self) -> Vec<(usize, usize)> {
        let mut set: Vec<(usize, usize)> = (0..self.node_count())
            .flat_map(|u| self.neighbors(u).iter().map(move |&v| (u.min(v), u.max(v))))
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// Builds an undirected graph from adjacency lists, symmetrising by union.
    pub fn from_directed(directed: &[Vec<usize>], metric: Metric, k: usize) -> Result<Self> {
        let n = directed.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, list) in directed.iter().enumerate() {
            for &v in list {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
                if v != u {
                    adj[u].push(v);
                    adj[v].push(u);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(KnnGraph {
            offsets,
            neighbors,
            metric,
            k,
            symmetrized: true,
        })
    }

    /// Relabels nodes so that old node `u` becomes `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::dim("KnnGraph::permuted", n, perm.len()));
        }
        let mut directed = vec![Vec::new(); n];
        for u in 0..n {
            directed[perm[u]] = self.neighbors(u).iter().map(|&v| perm[v]).collect();
        }
        let mut g = KnnGraph::from_directed(&directed, self.metric, self.k)?;
        g.symmetrized = self.symmetrized;
        Ok(g)
    }
}

/// Each node's `k` nearest other nodes, nearest first. Ties go to the lower index.
pub fn knn_lists(points: &FeatureMatrix, k: usize, metric: Metric) -> Result<Vec<Vec<usize>>> {
    let n = points.rows();
    if k == 0 || n <= k {
        return Err(Error::Config(format!(
            "KNN needs N > k ≥ 1, got N = {n}, k = {k}"
        )));
    }
    if !points.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Data("KNN input contains non-finite values".into()));
    }
    let norms: Vec<f64> = points.iter_rows().map(norm).collect();
    if metric == Metric::Cosine {
        let bad: Vec<usize> = (0..n).filter(|&i| norms[i] <= COSINE_MIN_NORM).collect();
        if !bad.is_empty() {
            return Err(Error::DegenerateVector { rows: bad });
        }
    }

    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let a = points.row(i);
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let b = points.row(j);
                let d = match metric {
                    Metric::Euclidean => euclidean(a, b),
                    Metric::Cosine => cosine_with_norms(a, b, norms[i], norms[j]),
                };
                if best.len() == k && d >= best[k - 1].0 {
                    continue;
                }
                // j ascends, so placing after equal distances keeps lower ids first.
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, j));
                best.truncate(k);
            }
            best.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Exact KNN graph, symmetrised by union of directed edges.
pub fn build_knn_graph(points: &FeatureMatrix, k: usize, metric: Metric) -> Result<KnnGraph> {
    let directed = knn_lists(points, k, metric)?;
    KnnGraph::from_directed(&directed, metric, k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

pub fn graph_stats(graph: &KnnGraph) -> GraphStats {
    let n = graph.node_count();
    let degrees = (0..n).map(|u| graph.degree(u));
    let edge_count = if graph.symmetrized() {
        graph.neighbor_array().len() / 2
    } else {
        graph.edge_set().len()
    };
    GraphStats {
        node_count: n,
        edge_count,
        min_degree: degrees.clone().min().unwrap_or(0),
        max_degree: degrees.max().unwrap_or(0),
        mean_degree: if n == 0 {
            0.0
        } else {
            graph.neighbor_array().len() as f64 / n as f64
        },
    }
}

const GRAPH_MAGIC: &[u8; 4] = b"KNNG";
const GRAPH_VERSION: u16 = 1;

/// Binary layout: `KNNG`, version `u16`, node count `u64`, stored neighbor
/// entries `u64`, metric `u8`, k `u8`, symmetrized `u8`, then `node_count + 1`
/// offsets and the neighbor array, all `u64` little-endian.
pub fn write_graph<W: Write>(graph: &KnnGraph, mut w: W) -> Result<()> {
    let k = u8::try_from(graph.k())
        .map_err(|_| Error::Config(format!("k = {} does not fit the graph header", graph.k())))?;
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&GRAPH_VERSION.to_le_bytes())?;
    w.write_all(&(graph.node_count() as u64).to_le_bytes())?;
    w.write_all(&(graph.neighbor_array().len() as u64).to_le_bytes())?;
    w.write_all(&[graph.metric().code(), k, u8::from(graph.symmetrized())])?;
    for &o in graph.offsets() {
        w.write_all(&(o as u64).to_le_bytes())?;
    }
    for &v in graph.neighbor_array() {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph<R: Read>(mut r: R) -> Result<KnnGraph> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::Data("not a KNNG graph file".into()));
    }
    let mut v2 = [0u8; 2];
    r.read_exact(&mut v2)?;
    let version = u16::from_le_bytes(v2);
    if version != GRAPH_VERSION {
        return Err(Error::Data(format!("unsupported graph version {version}")));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let e = u64::from_le_bytes(b) as usize;
    let mut flags = [0u8; 3];
    r.read_exact(&mut flags)?;
    let mut read_u64s = |count: usize| -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b)?;
            out.push(u64::from_le_bytes(b) as usize);
        }
        Ok(out)
    };
    let offsets = read_u64s(n + 1)?;
    let neighbors = read_u64s(e)?;
    KnnGraph::from_csr(
        offsets,
        neighbors,
        Metric::from_code(flags[0])?,
        flags[1] as usize,
        flags[2] != 0,
    )
}

pub fn save_graph(graph: &KnnGraph, path: impl AsRef<Path>) -> Result<()> {
    write_graph(graph, BufWriter::new(File::create(path)?))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<KnnGraph> {
    read_graph(BufReader::new(File::open(path)?))
}

/// Debug export: one `u,v` row per unordered edge.
pub fn write_edge_list_csv(graph: &KnnGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["u", "v"])?;
    for (u, v) in graph.edge_set() {
        w.write_record([u.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
