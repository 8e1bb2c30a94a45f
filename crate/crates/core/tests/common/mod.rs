//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use flowgat_core::autodiff::{BoundParams, ParamStore, Tape, Tensor, Var};
use flowgat_core::graph::Metric;
use flowgat_core::FeatureMatrix;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Largest relative error between analytic gradients of `f` (w.r.t. every
/// input) and central differences.
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        for e in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[e], numeric));
        }
    }
    worst
}

/// Same check over every tensor of a parameter store.
pub fn grad_check_store(store: &ParamStore, f: impl Fn(&mut Tape, &BoundParams) -> Var) -> f64 {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, true);
    let loss = f(&mut tape, &bound);
    let mut grads = tape.backward(loss).unwrap();
    let analytic = bound.collect(store, &mut grads);
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let p = s.bind(&mut tape, false);
        let out = f(&mut tape, &p);
        tape.value(out).data()[0]
    };
    let mut worst: f64 = 0.0;
    let mut work = store.clone();
    for (i, grad) in analytic.iter().enumerate() {
        for e in 0..grad.len() {
            let orig = work.tensors()[i].data()[e];
            work.tensors_mut()[i].data_mut()[e] = orig + FD_STEP;
            let up = eval(&work);
            work.tensors_mut()[i].data_mut()[e] = orig - FD_STEP;
            let down = eval(&work);
            work.tensors_mut()[i].data_mut()[e] = orig;
            worst = worst.max(rel_err(grad.data()[e], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn oracle_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
        }
    }
}

/// Brute-force KNN: full distance rows sorted by (distance, index), first k
/// kept, union-symmetrised. Returns undirected edges `(u, v)` with `u < v`.
pub fn brute_force_knn_edges(
    points: &FeatureMatrix,
    k: usize,
    metric: Metric,
) -> Vec<(usize, usize)> {
    let n = points.rows();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        let mut row: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (oracle_distance(points.row(i), points.row(j), metric), j))
            .collect();
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in row.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges.into_iter().collect()
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::new(
        n,
        dim,
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// One attention head evaluated with scalar loops: for each node `i`,
/// `e_ij = LeakyReLU(a_dst·(W h_i) + a_src·(W h_j))` over `j ∈ {i} ∪ nbrs(i)`,
/// softmax, then `Σ α_ij W h_j`.
pub fn hand_head(
    h: &[Vec<f64>],
    nbrs: &[Vec<usize>],
    w: &[Vec<f64>],
    a_dst: &[f64],
    a_src: &[f64],
    slope: f64,
) -> Vec<Vec<f64>> {
    let k = a_dst.len();
    let wh: Vec<Vec<f64>> = h
        .iter()
        .map(|row| {
            (0..k)
                .map(|c| row.iter().enumerate().map(|(r, v)| v * w[r][c]).sum())
                .collect()
        })
        .collect();
    (0..h.len())
        .map(|i| {
            let hood: Vec<usize> = std::iter::once(i).chain(nbrs[i].iter().copied()).collect();
            let logits: Vec<f64> = hood
                .iter()
                .map(|&j| {
                    let e: f64 = (0..k)
                        .map(|c| a_dst[c] * wh[i][c] + a_src[c] * wh[j][c])
                        .sum();
                    if e > 0.0 {
                        e
                    } else {
                        slope * e
                    }
                })
                .collect();
            let z: f64 = logits.iter().map(|e| e.exp()).sum();
            let mut out = vec![0.0; k];
            for (&j, e) in hood.iter().zip(&logits) {
                for c in 0..k {
                    out[c] += e.exp() / z * wh[j][c];
                }
            }
            out
        })
        .collect()
}
