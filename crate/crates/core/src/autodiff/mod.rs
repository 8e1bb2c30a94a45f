//! Minimal reverse-mode automatic differentiation with dense layers and Adam.

mod adam;
mod checkpoint;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use params::{glorot_uniform, BoundParams, DenseLayer, ParamId, ParamStore};
pub use tape::{EdgeIndex, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::softmax_in_place;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    SoftmaxRows,
}

impl Tape {
    pub fn activate(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::SoftmaxRows => self.softmax_rows(x),
        }
    }
}

/// Closed-form `KL(N(mu, diag exp(logvar)) ‖ N(0, I))`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_fixture(weight: Tensor, bias: Vec<f64>) -> (ParamStore, DenseLayer) {
        let mut store = ParamStore::new();
        let layer =
            DenseLayer::from_tensors(&mut store, "d", weight, Tensor::vector(bias)).unwrap();
        (store, layer)
    }

    fn run_dense(store: &ParamStore, layer: &DenseLayer, input: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let x = tape.constant(input);
        let y = layer.forward(&mut tape, &p, x)?;
        Ok(tape.value(y).clone())
    }

    #[test]
    fn dense_identity_passthrough() {
        let (store, layer) = dense_fixture(Tensor::identity(2), vec![0.0, 0.0]);
        let input = Tensor::identity(2);
        assert_eq!(run_dense(&store, &layer, input.clone()).unwrap(), input);
    }

    #[test]
    fn dense_hand_arithmetic() {
        let (store, layer) =
            dense_fixture(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap(), vec![0.5]);
        let out = run_dense(&store, &layer, Tensor::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[3.5]);
    }

    #[test]
    fn dense_zero_input_yields_bias_rows() {
        let w = Tensor::matrix(4, 2, (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let (store, layer) = dense_fixture(w, vec![0.25, -4.0]);
        let out = run_dense(&store, &layer, Tensor::zeros(&[3, 4])).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), &[0.25, -4.0]);
        }
    }

    #[test]
    fn dense_shape_mismatch_names_both_shapes() {
        let (store, layer) = dense_fixture(Tensor::identity(3), vec![0.0; 3]);
        let err = run_dense(&store, &layer, Tensor::zeros(&[2, 4])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[B×3]") && msg.contains("[2, 4]"), "{msg}");
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.activate(x, Activation::Relu).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[[7.0, 7.0, 7.0]]).unwrap());
        let y = tape.activate(x, Activation::SoftmaxRows).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(kl_standard_normal(&[0.0; 8], &[0.0; 8]), 0.0);
        let mut mu = [0.0; 8];
        mu[0] = 1.0;
        assert_eq!(kl_standard_normal(&mu, &[0.0; 8]), 0.5);
    }
}
