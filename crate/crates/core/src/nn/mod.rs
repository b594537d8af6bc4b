//! Dense multilayer perceptrons with exact reverse-mode gradients.
//!
//! Batches are row-major `(batch, features)` matrices. A layer computes
//! `act(x W^T + b)` and, when its dropout rate is nonzero and the pass runs in
//! [`Mode::Train`], multiplies the activations by an inverted-dropout mask
//! (kept units scaled by `1 / (1 - p)`). [`Mode::Eval`] never drops or scales.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SeededRng};

pub use adam::{AdamConfig, AdamState};
pub use loss::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// `max(x, 0.2 x)`
    LeakyRelu02,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu02 => z.max(0.2 * z),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`; the leaky kink uses the left slope.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu02 => {
                if z > 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::LeakyRelu02 => "leaky_relu_0.2",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "leaky_relu_0.2" => Some(Activation::LeakyRelu02),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Shape and behavior of one layer, used to build an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(outputs, inputs)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(spec: LayerSpec, rng: &mut SeededRng) -> Result<Self> {
        if spec.inputs == 0 || spec.outputs == 0 {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                spec.dropout
            )));
        }
        let limit = (6.0 / (spec.inputs + spec.outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((spec.outputs, spec.inputs), || {
            rng.random_range(-limit..limit)
        });
        Ok(Self {
            weight,
            bias: Array1::zeros(spec.outputs),
            activation: spec.activation,
            dropout: spec.dropout,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; masks derive from this seed.
    Train(u64),
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    shapes: Vec<(usize, usize)>,
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// Gradient with respect to the batch input.
    pub input: Array2<f64>,
}

impl Gradients {
    /// Flat views in the same order as [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| {
                [
                    g.weight.as_slice().expect("contiguous gradient"),
                    g.bias.as_slice().expect("contiguous gradient"),
                ]
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&g| g == 0.0))
            && self.input.iter().all(|&g| g == 0.0)
    }
}

impl Mlp {
    pub fn new(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for w in specs.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].outputs, w[1].inputs
                )));
            }
        }
        let layers = specs
            .iter()
            .map(|&s| Dense::init(s, rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::Shape("bias length differs from layer outputs".into()));
            }
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape("layer widths do not chain".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Sizes of the flat parameter blocks, for [`AdamState::new`].
    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }

    /// Mutable flat parameter blocks: weight then bias for each layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("contiguous weights"),
                    l.bias.as_slice_mut().expect("contiguous bias"),
                ]
            })
            .collect()
    }

    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_param_vector(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut offset = 0;
        for block in self.params_mut() {
            block.copy_from_slice(&params[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimMismatch {
                context: "network input".into(),
                expected: self.input_dim(),
                found: cols,
            });
        }
        Ok(())
    }

    /// Batched forward pass keeping everything needed for [`Mlp::backward`].
    pub fn forward_batch(&self, x: ArrayView2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x.ncols())?;
        let mut cache = ForwardCache {
            shapes: self.layers.iter().map(|l| l.weight.dim()).collect(),
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = affine(&h, layer);
            let mut a = z.mapv(|v| layer.activation.apply(v));
            let mask = dropout_mask(layer.dropout, mode, idx, a.dim());
            if let Some(m) = &mask {
                a *= m;
            }
            cache.inputs.push(h);
            cache.preacts.push(z);
            cache.masks.push(mask);
            h = a;
        }
        Ok((h, cache))
    }

    /// Batched forward pass without a cache.
    pub fn predict(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut a = affine(&h, layer);
            a.mapv_inplace(|v| layer.activation.apply(v));
            if let Some(m) = dropout_mask(layer.dropout, mode, idx, a.dim()) {
                a *= &m;
            }
            h = a;
        }
        Ok(h)
    }

    /// Single-vector forward pass.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (out, cache) = self.forward_batch(view, mode)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Reverse-mode gradients for the pass recorded in `cache`, given the
    /// gradient of the loss with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        let shapes: Vec<_> = self.layers.iter().map(|l| l.weight.dim()).collect();
        if shapes != cache.shapes || cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("stale forward cache for this network".into()));
        }
        let batch = cache.inputs[0].nrows();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected {:?}",
                output_grad.dim(),
                (batch, self.output_dim())
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = output_grad.to_owned();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if let Some(m) = &cache.masks[idx] {
                g *= m;
            }
            if layer.activation != Activation::Identity {
                g.zip_mut_with(&cache.preacts[idx], |gv, &z| *gv *= layer.activation.derivative(z));
            }
            let mut weight = g.t().dot(&cache.inputs[idx]);
            if !weight.is_standard_layout() {
                weight = weight.as_standard_layout().into_owned();
            }
            let bias = g.sum_axis(Axis(0));
            let next = g.dot(&layer.weight);
            grads.push(LayerGrad { weight, bias });
            g = next;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: g,
        })
    }
}

fn affine(h: &Array2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = h.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn dropout_mask(p: f64, mode: Mode, layer: usize, dim: (usize, usize)) -> Option<Array2<f64>> {
    match mode {
        Mode::Train(seed) if p > 0.0 => {
            let mut rng = rng_from_seed(derive_seed(seed, "dropout", layer as u64));
            let scale = 1.0 / (1.0 - p);
            Some(Array2::from_shape_simple_fn(dim, || {
                if rng.random::<f64>() >= p {
                    scale
                } else {
                    0.0
                }
            }))
        }
        _ => None,
    }
}

/// Copies `rows` of a flat row-major buffer of width `width` into a matrix.
pub fn gather_rows(values: &[f64], width: usize, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), width));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r)
            .as_slice_mut()
            .expect("contiguous row")
            .copy_from_slice(&values[i * width..(i + 1) * width]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_layer(n: usize, dropout: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Array2::eye(n),
            bias: Array1::zeros(n),
            activation: Activation::Identity,
            dropout,
        }])
        .unwrap()
    }

    #[test]
    fn identity_network_is_identity() {
        let net = identity_layer(3, 0.0);
        let (y, _) = net.forward(&[1.0, -2.0, 0.5], Mode::Train(1)).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn leaky_relu_slope() {
        assert_eq!(Activation::LeakyRelu02.apply(-1.0), -0.2);
        assert_eq!(Activation::LeakyRelu02.apply(3.0), 3.0);
    }

    #[test]
    fn eval_dropout_is_identity() {
        let net = identity_layer(4, 0.5);
        let (y, _) = net.forward(&[1.0, 2.0, 3.0, 4.0], Mode::Eval).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn train_dropout_matches_eval_in_expectation() {
        let net = identity_layer(4, 0.5);
        let x = [1.0, 2.0, 3.0, 4.0];
        let trials = 20_000;
        let mut sum = [0.0; 4];
        for t in 0..trials {
            let (y, _) = net.forward(&x, Mode::Train(t)).unwrap();
            for (s, v) in sum.iter_mut().zip(&y) {
                *s += v;
            }
            assert!(y.iter().zip(&x).all(|(a, b)| *a == 0.0 || *a == 2.0 * b));
        }
        for (s, v) in sum.iter().zip(&x) {
            let mean = s / trials as f64;
            // five standard errors of a Bernoulli(0.5) mean
            assert!((mean - v).abs() / v < 5.0 / (trials as f64).sqrt(), "{mean} vs {v}");
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = rng_from_seed(0);
        let net = Mlp::new(
            &[
                LayerSpec { inputs: 3, outputs: 5, activation: Activation::Tanh, dropout: 0.0 },
                LayerSpec { inputs: 5, outputs: 2, activation: Activation::Identity, dropout: 0.0 },
            ],
            &mut rng,
        )
        .unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.0]];
        let (_, cache) = net.forward_batch(x.view(), Mode::Eval).unwrap();
        let g = net.backward(&cache, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn affine_mse_gradient_closed_form() {
        // loss = mean_b sum_d (Wx + b - t)^2, so dW = 2 (Wx + b - t) x^T / B
        let net = Mlp::from_layers(vec![Dense {
            weight: array![[1.0, 2.0], [0.5, -1.0]],
            bias: array![0.1, -0.2],
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap();
        let x = array![[1.0, 3.0]];
        let t = array![[2.0, 0.0]];
        let (y, cache) = net.forward_batch(x.view(), Mode::Eval).unwrap();
        let (_, dy) = loss::mse(y.view(), t.view());
        let g = net.backward(&cache, dy.view()).unwrap();
        let r = [1.0 + 6.0 + 0.1 - 2.0, 0.5 - 3.0 - 0.2];
        let expect = array![[2.0 * r[0], 2.0 * r[0] * 3.0], [2.0 * r[1], 2.0 * r[1] * 3.0]];
        for (a, b) in g.layers[0].weight.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.layers[0].bias[0] - 2.0 * r[0]).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors_and_stale_cache() {
        let net = identity_layer(3, 0.0);
        assert!(matches!(net.forward(&[1.0], Mode::Eval), Err(Error::DimMismatch { .. })));
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0], Mode::Eval).unwrap();
        let other = identity_layer(2, 0.0);
        assert!(other.backward(&cache, Array2::zeros((1, 2)).view()).is_err());
        assert!(net.backward(&cache, Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn widths_must_chain() {
        let mut rng = rng_from_seed(0);
        let specs = [
            LayerSpec { inputs: 3, outputs: 5, activation: Activation::Tanh, dropout: 0.0 },
            LayerSpec { inputs: 4, outputs: 2, activation: Activation::Identity, dropout: 0.0 },
        ];
        assert!(Mlp::new(&specs, &mut rng).is_err());
    }
}
