//! A small feed-forward hash function `ℝ^D → (0,1)^K`.
//!
//! Hidden layers use ReLU, the output layer a logistic squashing followed by
//! the relaxed-code clamp. Gradients are computed by hand.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint};
pub use train::{train, EpochLoss, TrainConfig, TrainState, WeightMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{IcsError, Result};
use crate::loss::{RelaxedCode, CODE_EPSILON};
use crate::retrieval::BinaryCode;
use crate::scalar::{sigmoid, Scalar};

/// One affine layer; `weight` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weight: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
        }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }
}

/// Encoder parameters. The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    layers: Vec<Dense<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    /// Seeded initialization: He-uniform for ReLU layers, Glorot-uniform for
    /// the output layer, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, pair)| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let limit = if l + 1 < n_layers {
                    (6.0 / n_in as f64).sqrt()
                } else {
                    (6.0 / (n_in + n_out) as f64).sqrt()
                };
                let mut layer = Dense::zeros(n_in, n_out);
                for w in &mut layer.weight {
                    *w = T::lit(rng.random_range(-limit..limit));
                }
                layer
            })
            .collect();
        Ok(EncoderParams { layers })
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(EncoderParams {
            layers: sizes.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(IcsError::Argument(
                "encoder needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(IcsError::Argument(format!(
                    "layer {i} has inconsistent shapes"
                )));
            }
            if i > 0 && layers[i - 1].n_out != l.n_in {
                return Err(IcsError::Argument(format!(
                    "layer {i} input does not match layer {}",
                    i - 1
                )));
            }
        }
        Ok(EncoderParams { layers })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(IcsError::Argument(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    /// `[D, h_1, …, K]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn code_bits(&self) -> usize {
        self.layers.last().expect("nonempty").n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Every parameter, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.values_mut().zip(other.values()) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

/// Intermediate values kept for the backward pass.
struct Trace<T> {
    /// Input of every layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<T>>,
}

fn forward_trace<T: Scalar>(
    params: &EncoderParams<T>,
    x: &[T],
) -> Result<(RelaxedCode<T>, Trace<T>)> {
    if x.len() != params.input_dim() {
        return Err(IcsError::Argument(format!(
            "feature vector has {} entries, encoder expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut act = x.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = layer.apply(&act);
        inputs.push(act);
        act = if l + 1 < n {
            z.iter().map(|&v| v.max(T::zero())).collect()
        } else {
            z.iter().map(|&v| sigmoid(v)).collect()
        };
        pre.push(z);
    }
    let code = RelaxedCode::new(act)?;
    Ok((code, Trace { inputs, pre }))
}

/// Relaxed code of one feature vector.
pub fn forward<T: Scalar>(params: &EncoderParams<T>, x: &[T]) -> Result<RelaxedCode<T>> {
    forward_trace(params, x).map(|(code, _)| code)
}

/// Gradients of `L(forward(x))` for every parameter, given `∂L/∂b`.
pub fn backward<T: Scalar>(
    params: &EncoderParams<T>,
    x: &[T],
    grad_wrt_code: &[T],
) -> Result<EncoderParams<T>> {
    let (_, trace) = forward_trace(params, x)?;
    backward_from_trace(params, &trace, grad_wrt_code)
}

fn backward_from_trace<T: Scalar>(
    params: &EncoderParams<T>,
    trace: &Trace<T>,
    grad_wrt_code: &[T],
) -> Result<EncoderParams<T>> {
    if grad_wrt_code.len() != params.code_bits() {
        return Err(IcsError::Argument(format!(
            "code gradient has {} entries, encoder emits {} bits",
            grad_wrt_code.len(),
            params.code_bits()
        )));
    }
    let eps = T::lit(CODE_EPSILON);
    let n = params.layers.len();
    let mut grads = params.zeros_like();

    // δ at the output pre-activation: the clamp passes no gradient.
    let mut delta: Vec<T> = trace.pre[n - 1]
        .iter()
        .zip(grad_wrt_code)
        .map(|(&z, &g)| {
            let s = sigmoid(z);
            if s < eps || s > T::one() - eps {
                T::zero()
            } else {
                g * s * (T::one() - s)
            }
        })
        .collect();

    for l in (0..n).rev() {
        let layer = &params.layers[l];
        let input = &trace.inputs[l];
        let g = &mut grads.layers[l];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] = d;
            let row = &mut g.weight[o * layer.n_in..(o + 1) * layer.n_in];
            for (w, &xi) in row.iter_mut().zip(input) {
                *w = d * xi;
            }
        }
        if l > 0 {
            let prev_pre = &trace.pre[l - 1];
            delta = (0..layer.n_in)
                .map(|i| {
                    if prev_pre[i] <= T::zero() {
                        return T::zero();
                    }
                    delta
                        .iter()
                        .enumerate()
                        .map(|(o, &d)| d * layer.weight[o * layer.n_in + i])
                        .sum()
                })
                .collect();
        }
    }
    Ok(grads)
}

/// `+1` where `b_k ≥ 0.5`, `-1` otherwise.
pub fn binarize<T: Scalar>(b: &RelaxedCode<T>) -> BinaryCode {
    let half = T::lit(0.5);
    let bits: Vec<bool> = b.as_slice().iter().map(|&v| v >= half).collect();
    BinaryCode::from_bits(&bits)
}

/// Binary codes for a batch of feature vectors, in input order.
pub fn encode_all<T: Scalar>(
    params: &EncoderParams<T>,
    features: &[Vec<T>],
) -> Result<Vec<BinaryCode>> {
    features
        .par_iter()
        .map(|x| forward(params, x).map(|c| binarize(&c)))
        .collect()
}
