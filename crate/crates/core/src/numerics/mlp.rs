use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// (out, in)
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Fully connected network with tanh hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: Activation,
}

/// Parameter gradients, laid out like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights *= k;
            l.bias *= k;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input batch, `acts[k]` the output of layer `k - 1`.
    pub acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace always holds the input")
    }
}

impl Mlp {
    /// Zero-initialized network with the given layer sizes (input first).
    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, output })
    }

    /// Uniform fan-in initialization: hidden layers draw from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the output layer from
    /// `U(-final_scale, final_scale)`.
    pub fn init<R: Rng>(sizes: &[usize], output: Activation, final_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let bound = if k == last { final_scale } else { 1.0 / (layer.input_dim() as f64).sqrt() };
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer.bias.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::output_dim).unwrap_or(0)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::output_dim));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn activation_for(&self, k: usize) -> Activation {
        if k + 1 == self.layers.len() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Trace> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: input.ncols(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights.t());
            z += &layer.bias;
            if self.activation_for(k) == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        Ok(Trace { acts })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let trace = self.forward_batch(x)?;
        Ok(trace.output().row(0).to_vec())
    }

    /// Reverse-mode gradients of `sum(output * upstream)` with respect to the
    /// parameters (summed over the batch) and the input (per row).
    pub fn backward_batch(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let out = trace.output();
        if upstream.dim() != out.dim() {
            return Err(Error::Shape {
                expected: out.ncols(),
                actual: upstream.ncols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            if self.activation_for(k) == Activation::Tanh {
                // tanh' = 1 - tanh²
                ndarray::Zip::from(&mut delta)
                    .and(&trace.acts[k + 1])
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
            let layer = &self.layers[k];
            let dw = delta.t().dot(&trace.acts[k]);
            let db = delta.sum_axis(Axis(0));
            let next = delta.dot(&layer.weights);
            grads.push(Dense { weights: dw, bias: db });
            delta = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let trace = self.forward_batch(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        let (g, dx) = self.backward_batch(&trace, up)?;
        Ok((g, dx.row(0).to_vec()))
    }

    fn check_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::Shape {
                expected: self.param_count(),
                actual: other.param_count(),
            });
        }
        Ok(())
    }

    /// Polyak averaging: `self ← τ·online + (1−τ)·self`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        self.check_same_shape(online)?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("soft update rate must lie in [0, 1], got {tau}")));
        }
        for (t, o) in self.params_mut().zip(online.params()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }
}
