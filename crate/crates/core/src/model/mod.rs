//! A dense feed-forward classifier trained from scratch.
//!
//! Weights are stored `fan_in x fan_out`, so a batch `X` (rows are examples)
//! maps to `X W + b`.

mod optim;
mod train;

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use optim::{adam_step, sgd_step, AdamState};
pub use train::{evaluate, local_train, Optimizer, TrainingHyper};

use crate::error::{Error, Result};
use crate::rng;

/// Probability floor used inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer widths from input to output; hidden layers share one activation and
/// the output layer is a softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl ArchitectureSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        Self {
            widths,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::invalid(
                "architecture needs at least two positive layer widths",
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Ordered `(W, b)` pairs. Gradients share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl ModelParams {
    pub fn zeros(arch: &ArchitectureSpec) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .widths
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layers,
            activation: arch.activation,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn architecture(&self) -> ArchitectureSpec {
        let mut widths = vec![self.layers[0].weights.nrows()];
        widths.extend(self.layers.iter().map(|l| l.weights.ncols()));
        ArchitectureSpec {
            widths,
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.dim() == b.weights.dim() && a.bias.dim() == b.bias.dim()
            })
    }

    pub(crate) fn check_shape(&self, other: &ModelParams) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.architecture().widths,
                other.architecture().widths
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Every value, layer-major, weights row-major before the bias.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += alpha * other`. Shapes must already match.
    pub(crate) fn scaled_add(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(alpha, &b.weights);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    pub(crate) fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            l.weights *= alpha;
            l.bias *= alpha;
        }
    }

    /// Little-endian f64 checkpoint in [`values`](Self::values) order, no header.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        for v in self.values() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_params() * 8);
        self.write_checkpoint(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_checkpoint<R: Read>(arch: &ArchitectureSpec, mut input: R) -> Result<Self> {
        let mut params = ModelParams::zeros(arch)?;
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != params.num_params() * 8 {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} bytes, architecture needs {}",
                bytes.len(),
                params.num_params() * 8
            )));
        }
        for (slot, chunk) in params.values_mut().zip(bytes.chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(params)
    }
}

/// He-style uniform initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
/// with zero biases.
pub fn init_params(arch: &ArchitectureSpec, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let mut rng = rng::rng_for(seed, &[rng::STREAM_INIT]);
    for layer in &mut params.layers {
        let limit = (6.0 / layer.weights.nrows() as f64).sqrt();
        layer
            .weights
            .mapv_inplace(|_| rng.random_range(-limit..limit));
    }
    Ok(params)
}

struct ForwardPass {
    /// Input followed by every layer's output; the last entry holds probabilities.
    activations: Vec<Array2<f64>>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn forward_pass(params: &ModelParams, x: ArrayView2<'_, f64>) -> Result<ForwardPass> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            found: x.ncols(),
        });
    }
    let last = params.layers.len() - 1;
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(x.to_owned());
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = activations[i].dot(&layer.weights);
        z += &layer.bias;
        if i == last {
            softmax_rows(&mut z);
        } else {
            params.activation.apply(&mut z);
        }
        activations.push(z);
    }
    Ok(ForwardPass { activations })
}

/// Class probabilities, one row per example.
pub fn forward(params: &ModelParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(forward_pass(params, x)?
        .activations
        .pop()
        .expect("output layer"))
}

/// Mean negative natural-log probability of the true classes.
pub fn loss_ce(probs: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let total: f64 = probs
        .outer_iter()
        .zip(labels)
        .map(|(row, &y)| -row[y].max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

/// Loss and analytic gradient of the mean cross-entropy over the batch.
pub fn backward(
    params: &ModelParams,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, ModelParams)> {
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: labels.len(),
        });
    }
    let classes = params.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} >= {classes} classes")));
    }
    let pass = forward_pass(params, x)?;
    let probs = pass.activations.last().expect("output layer");
    let loss = loss_ce(probs.view(), labels);

    let scale = 1.0 / labels.len() as f64;
    // d loss / d logits = (p - onehot) / batch
    let mut delta = probs.clone();
    for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    delta *= scale;

    let mut grads = params.zeros_like();
    for i in (0..params.layers.len()).rev() {
        let input = &pass.activations[i];
        grads.layers[i].weights = input.t().dot(&delta);
        grads.layers[i].bias = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut upstream = delta.dot(&params.layers[i].weights.t());
            let act = params.activation;
            Zip::from(&mut upstream)
                .and(input)
                .for_each(|d, &a| *d *= act.derivative_from_output(a));
            delta = upstream;
        }
    }
    Ok((loss, grads))
}
