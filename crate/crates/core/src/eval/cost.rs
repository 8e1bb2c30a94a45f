use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dimred::ReducerKind;
use crate::error::{Error, Result};

/// Size parameters of the analytic cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostInputs {
    /// Sample (node) count N.
    pub n: u64,
    /// Feature width D.
    pub d: u64,
    /// Edge count E.
    pub e: u64,
    /// PCA components C.
    pub components: u64,
    /// Output features per attention head K.
    pub k: u64,
    /// Attention heads H.
    pub h: u64,
    /// Attention layers n.
    pub layers: u64,
    /// Encoder dense layers.
    pub a: u64,
    /// Decoder dense layers.
    pub b: u64,
    /// Total dense layers, `a + b`.
    pub c: u64,
    pub d_in: u64,
    pub d_out: u64,
}

impl Default for CostInputs {
    fn default() -> Self {
        CostInputs {
            n: 1000,
            d: 8,
            e: 3000,
            components: 8,
            k: 8,
            h: 4,
            layers: 2,
            a: 2,
            b: 2,
            c: 4,
            d_in: 32,
            d_out: 8,
        }
    }
}

impl CostInputs {
    pub fn validate(&self) -> Result<()> {
        if self.a.checked_add(self.b) != Some(self.c) {
            return Err(Error::Config(format!(
                "c must equal a + b ({} + {} ≠ {})",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }
}

/// Abstract operation counts with leading constants dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub reducer_cost: u128,
    pub graph_cost: u128,
    pub gat_cost: u128,
    pub total: u128,
}

impl fmt::Display for CostEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "reducer {} + graph {} + gat {} = {}",
            self.reducer_cost, self.graph_cost, self.gat_cost, self.total
        )
    }
}

/// Reducer: `c·d_in·d_out` (AE), `c·d_in·d_out + 1` (VAE), `N·D·C` (PCA).
/// Graph: `N·D² + E·D`. Attention: `n·(N·D·K + H·E·K)`.
///
/// Arithmetic saturates at `u128::MAX`.
pub fn cost_estimate(method: ReducerKind, x: &CostInputs) -> CostEstimate {
    let m = |vals: &[u64]| {
        vals.iter()
            .fold(1u128, |acc, &v| acc.saturating_mul(v as u128))
    };
    let dense = m(&[x.c, x.d_in, x.d_out]);
    let reducer_cost = match method {
        ReducerKind::Ae => dense,
        ReducerKind::Vae => dense.saturating_add(1),
        ReducerKind::Pca => m(&[x.n, x.d, x.components]),
    };
    let graph_cost = m(&[x.n, x.d, x.d]).saturating_add(m(&[x.e, x.d]));
    let gat_cost =
        (x.layers as u128).saturating_mul(m(&[x.n, x.d, x.k]).saturating_add(m(&[x.h, x.e, x.k])));
    CostEstimate {
        reducer_cost,
        graph_cost,
        gat_cost,
        total: reducer_cost
            .saturating_add(graph_cost)
            .saturating_add(gat_cost),
    }
}
