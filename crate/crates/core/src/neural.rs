//! Dense feed-forward network with leaky rectifier hidden units.
//!
//! Hidden units compute `f(x) = x` for `x > 0` and `eta * x` otherwise; the
//! derivative at exactly zero is taken as `eta`. The output layer is either
//! linear (Q-values) or an independent sigmoid per unit (action
//! probabilities). Batches are stored `(examples, features)`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slope of the negative part of the rectifier.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Linear,
    SigmoidPerUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `theta -= alpha * g`
    Descent,
    /// `theta += alpha * g`
    Ascent,
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights are stored `(fan_in, fan_out)` so a batch propagates as `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    leaky_slope: f64,
    output_mode: OutputMode,
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `inputs[l]` is the activation entering layer `l`.
    pub inputs: Vec<Array2<f64>>,
    /// `pre[l]` is `inputs[l] W_l + b_l`.
    pub pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    /// Concatenates traces of the same network along the batch axis.
    pub fn stack(traces: &[ForwardTrace]) -> Result<ForwardTrace> {
        let first = traces.first().ok_or_else(|| Error::Contract("no traces to stack".into()))?;
        let layers = first.pre.len();
        if traces.iter().any(|t| t.pre.len() != layers || t.inputs.len() != layers) {
            return Err(Error::Contract("traces come from different networks".into()));
        }
        let cat = |pick: &dyn Fn(&ForwardTrace) -> &Array2<f64>| -> Result<Array2<f64>> {
            let views: Vec<ArrayView2<f64>> = traces.iter().map(|t| pick(t).view()).collect();
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Contract(format!("trace shapes differ: {e}")))
        };
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        for l in 0..layers {
            inputs.push(cat(&|t| &t.inputs[l])?);
            pre.push(cat(&|t| &t.pre[l])?);
        }
        let output = cat(&|t| &t.output)?;
        Ok(ForwardTrace { inputs, pre, output })
    }
}

/// Gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Flattened in the same order as [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Network {
    /// Fan-in scaled uniform weights, zero biases. Same seed, same network.
    pub fn new(sizes: &[usize], output_mode: OutputMode, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!("need at least an input and an output layer, got {sizes:?}")));
        }
        if sizes.contains(&0) {
            return Err(Error::Config(format!("empty layer in {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (3.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases, leaky_slope: DEFAULT_LEAKY_SLOPE, output_mode })
    }

    /// `[input, 100, 100, 100, output]`.
    pub fn standard(input: usize, output: usize, output_mode: OutputMode, seed: u64) -> Result<Self> {
        Self::new(&[input, 100, 100, 100, output], output_mode, seed)
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Result<Self> {
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::Config(format!("leaky slope must be non-negative, got {slope}")));
        }
        self.leaky_slope = slope;
        Ok(self)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardTrace)> {
        if input.ncols() != self.input_size() {
            return Err(Error::Shape(format!("network expects {} inputs, got {}", self.input_size(), input.ncols())));
        }
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut x = input.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = x.dot(w) + b;
            let a = if l + 1 < layers {
                z.mapv(|v| leaky_relu(v, self.leaky_slope))
            } else {
                match self.output_mode {
                    OutputMode::Linear => z.clone(),
                    OutputMode::SigmoidPerUnit => z.mapv(sigmoid),
                }
            };
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        let trace = ForwardTrace { inputs, pre, output: x.clone() };
        Ok((x, trace))
    }

    /// Forward pass of a single example.
    pub fn forward_one(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
        let view = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
        let (out, trace) = self.forward(view)?;
        Ok((out.row(0).to_vec(), trace))
    }

    /// Outputs only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_one(input)?.0)
    }

    fn check_trace(&self, trace: &ForwardTrace, grad_shape: (usize, usize)) -> Result<()> {
        let layers = self.weights.len();
        if trace.pre.len() != layers || trace.inputs.len() != layers {
            return Err(Error::Contract(format!("trace has {} layers, network {layers}", trace.pre.len())));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if trace.inputs[l].ncols() != w.nrows() || trace.pre[l].ncols() != w.ncols() {
                return Err(Error::Contract(format!("trace layer {l} does not match the network")));
            }
        }
        if grad_shape != (trace.batch_size(), self.output_size()) {
            return Err(Error::Contract(format!(
                "output gradient {grad_shape:?} does not match trace ({}, {})",
                trace.batch_size(),
                self.output_size()
            )));
        }
        Ok(())
    }

    /// Gradient of a loss with respect to every parameter given `d loss / d output`,
    /// summed over the batch.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        self.check_trace(trace, output_grad.dim())?;
        let delta = match self.output_mode {
            OutputMode::Linear => output_grad.to_owned(),
            OutputMode::SigmoidPerUnit => &output_grad * &trace.output.mapv(|y| y * (1.0 - y)),
        };
        self.backprop(trace, delta)
    }

    /// Like [`backward`](Self::backward) but starting from `d loss / d pre-activation`
    /// of the output layer (the logits of a sigmoid head).
    pub fn backward_logits(&self, trace: &ForwardTrace, logit_grad: ArrayView2<f64>) -> Result<Gradients> {
        self.check_trace(trace, logit_grad.dim())?;
        self.backprop(trace, logit_grad.to_owned())
    }

    fn backprop(&self, trace: &ForwardTrace, mut delta: Array2<f64>) -> Result<Gradients> {
        let layers = self.weights.len();
        let mut weights = vec![Array2::zeros((0, 0)); layers];
        let mut biases = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            weights[l] = trace.inputs[l].t().dot(&delta);
            biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let upstream = delta.dot(&self.weights[l].t());
                let slope = self.leaky_slope;
                delta = ndarray::Zip::from(&upstream)
                    .and(&trace.pre[l - 1])
                    .map_collect(|&g, &z| g * leaky_relu_grad(z, slope));
            }
        }
        Ok(Gradients { weights, biases })
    }

    /// One gradient step. Non-finite gradients leave the network untouched.
    pub fn sgd_step(&mut self, grads: &Gradients, alpha: f64, direction: Direction) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("gradient holds NaN or infinity".into()));
        }
        if grads.weights.len() != self.weights.len()
            || grads.weights.iter().zip(&self.weights).any(|(g, w)| g.dim() != w.dim())
            || grads.biases.iter().zip(&self.biases).any(|(g, b)| g.dim() != b.dim())
        {
            return Err(Error::Shape("gradient does not match network".into()));
        }
        let step = match direction {
            Direction::Descent => -alpha,
            Direction::Ascent => alpha,
        };
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(step, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(step, g);
        }
        Ok(())
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                let cols = w.ncols();
                return w.get_mut((index / cols, index % cols));
            }
            index -= w.len();
            if index < b.len() {
                return b.get_mut(index);
            }
            index -= b.len();
        }
        None
    }

    pub fn param(&self, mut index: usize) -> Option<f64> {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if index < w.len() {
                let cols = w.ncols();
                return w.get((index / cols, index % cols)).copied();
            }
            index -= w.len();
            if index < b.len() {
                return b.get(index).copied();
            }
            index -= b.len();
        }
        None
    }

    pub fn set_param(&mut self, index: usize, value: f64) -> Result<()> {
        let len = self.param_count();
        let p = self.param_mut(index).ok_or(Error::Bounds { index, len })?;
        *p = value;
        Ok(())
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!("{} parameters for a network of {}", params.len(), self.param_count())));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().zip(&mut it).for_each(|(p, v)| *p = v);
            b.iter_mut().zip(&mut it).for_each(|(p, v)| *p = v);
        }
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"FLXN";
const FORMAT_VERSION: u32 = 1;

impl Network {
    /// Binary checkpoint: magic, version, output mode, leaky slope, layer
    /// sizes, then every parameter as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        let mode: u8 = match self.output_mode {
            OutputMode::Linear => 0,
            OutputMode::SigmoidPerUnit => 1,
        };
        w.write_all(&[mode]).map_err(io)?;
        w.write_all(&self.leaky_slope.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes()).map_err(io)?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes()).map_err(io)?;
        }
        for p in self.flat_params() {
            w.write_all(&p.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
            Ok(buf)
        }
        if &take::<4, _>(&mut r)? != MAGIC {
            return Err(Error::Checkpoint("not a network checkpoint".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let output_mode = match take::<1, _>(&mut r)?[0] {
            0 => OutputMode::Linear,
            1 => OutputMode::SigmoidPerUnit,
            m => return Err(Error::Checkpoint(format!("unknown output mode {m}"))),
        };
        let slope = f64::from_le_bytes(take(&mut r)?);
        let n = u32::from_le_bytes(take(&mut r)?) as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| take(&mut r).map(|b| u32::from_le_bytes(b) as usize)).collect::<Result<Vec<_>>>()?;
        let mut net = Network::new(&sizes, output_mode, 0)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .with_leaky_slope(slope)?;
        let params =
            (0..net.param_count()).map(|_| take(&mut r).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        net.set_flat_params(&params)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(bytes.as_slice())
    }
}
