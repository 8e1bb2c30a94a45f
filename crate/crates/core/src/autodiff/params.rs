use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors owned by one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.leaf(t.clone(), requires_grad))
                .collect(),
        }
    }
}

/// Tape handles for a [`ParamStore`], in store order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient for every parameter; parameters the loss never touched get zeros.
    pub fn collect(&self, store: &ParamStore, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

/// Uniform Glorot initialisation: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

/// Fully connected layer `y = x·W + b` with `W: [d_in × d_out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!(
                "dense layer `{name}` needs positive widths, got {d_in}→{d_out}"
            )));
        }
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(rng, &[d_in, d_out], d_in, d_out),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Ok(DenseLayer {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    /// Wraps existing weight `[d_in × d_out]` and bias `[d_out]` tensors.
    pub fn from_tensors(
        store: &mut ParamStore,
        name: &str,
        weight: Tensor,
        bias: Tensor,
    ) -> Result<Self> {
        if weight.rank() != 2 || bias.len() != weight.shape()[1] || weight.is_empty() {
            return Err(Error::dim(
                "DenseLayer::from_tensors",
                "weight [d_in×d_out] with bias [d_out]",
                format!("{:?} and {:?}", weight.shape(), bias.shape()),
            ));
        }
        let (d_in, d_out) = (weight.shape()[0], weight.shape()[1]);
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = store.add(format!("{name}.bias"), bias);
        Ok(DenseLayer {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    /// Looks up `{name}.weight` and `{name}.bias` in a loaded store.
    pub fn from_store(store: &ParamStore, name: &str) -> Result<Self> {
        let find = |suffix: &str| {
            store
                .find(&format!("{name}.{suffix}"))
                .ok_or_else(|| Error::Data(format!("missing parameter `{name}.{suffix}`")))
        };
        let (weight, bias) = (find("weight")?, find("bias")?);
        let w = store.get(weight);
        if w.rank() != 2 || store.get(bias).len() != w.shape()[1] {
            return Err(Error::Data(format!(
                "parameter shapes of `{name}` are inconsistent"
            )));
        }
        Ok(DenseLayer {
            weight,
            bias,
            d_in: w.shape()[0],
            d_out: w.shape()[1],
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, input: Var) -> Result<Var> {
        let shape = tape.value(input).shape();
        if shape.len() != 2 || shape[1] != self.d_in {
            return Err(Error::dim(
                "dense_forward",
                format!("[B×{}]", self.d_in),
                format!("{shape:?} (weight [{}×{}])", self.d_in, self.d_out),
            ));
        }
        let h = tape.matmul(input, params.var(self.weight))?;
        tape.add_bias(h, params.var(self.bias))
    }
}
