//! Dense feed-forward networks trained with Adam on mean-squared error.
//!
//! Networks are small multi-layer perceptrons: hidden layers use a fixed
//! nonlinearity (ReLU by default), the output layer is linear. They back both
//! the per-channel Q-networks and the learned environment model.
//!
//! # Checkpoint format
//!
//! [`Network::write_text`] emits a line-oriented UTF-8 format:
//!
//! ```text
//! dine-network 1
//! layers 5 64 64 5
//! activation relu
//! <one parameter per line>
//! ```
//!
//! Parameters are listed layer by layer; each layer writes its weight matrix
//! row-major with shape `fan_in x fan_out`, followed by its `fan_out` biases.
//! Values use the shortest decimal representation that parses back to the
//! identical `f64`, so a write/read cycle is bit-exact.

use std::io::{BufRead, Write};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::{Error, Result};

const FORMAT_MAGIC: &str = "dine-network";
const FORMAT_VERSION: u32 = 1;

/// Samples per gradient work unit. Fixed so that sequential and parallel
/// training sum partial gradients in the same order.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    activation: Activation,
    // fan_in x fan_out, so a batch forward is `x.dot(w) + b`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output layer, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Network {
    /// He-uniform initialisation (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), zero
    /// biases, ReLU hidden layers.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::with_activation(layer_sizes, Activation::Relu, seed)
    }

    pub fn with_activation(
        layer_sizes: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-limit..limit)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Network {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Builds a network from a flat parameter vector in checkpoint order.
    pub fn from_params(
        layer_sizes: &[usize],
        activation: Activation,
        params: &[f64],
    ) -> Result<Self> {
        let mut net = Self::with_activation(layer_sizes, activation, 0)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    /// All parameters in checkpoint order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data("non-finite parameter".into()));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    /// Copies all parameters of `src` into `self`.
    pub fn copy_from(&mut self, src: &Network) -> Result<()> {
        if self.layer_sizes != src.layer_sizes {
            return Err(Error::Config(format!(
                "cannot copy weights between shapes {:?} and {:?}",
                src.layer_sizes, self.layer_sizes
            )));
        }
        self.activation = src.activation;
        for (d, s) in self.weights.iter_mut().zip(&src.weights) {
            d.assign(s);
        }
        for (d, s) in self.biases.iter_mut().zip(&src.biases) {
            d.assign(s);
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("shape checked");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass for a batch laid out one sample per row.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        Ok(self.activations(inputs).pop().expect("at least one layer"))
    }

    /// Post-activation outputs of every layer, starting with the input.
    fn activations(&self, inputs: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(inputs.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l < last && self.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Squared-error sum and gradient of `scale * sum((y - t)^2)` for one
    /// chunk of samples.
    fn chunk_gradient(
        &self,
        x: ArrayView2<f64>,
        t: ArrayView2<f64>,
        scale: f64,
    ) -> (f64, ParamSet) {
        let acts = self.activations(x);
        let mut delta = &acts[acts.len() - 1] - &t;
        let sq_err = delta.iter().map(|d| d * d).sum::<f64>();
        delta *= 2.0 * scale;

        let n_layers = self.weights.len();
        let mut gw = Vec::with_capacity(n_layers);
        let mut gb = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            gw.push(acts[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut next = delta.dot(&self.weights[l].t());
                if self.activation == Activation::Relu {
                    next.zip_mut_with(&acts[l], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                delta = next;
            }
        }
        gw.reverse();
        gb.reverse();
        (
            sq_err,
            ParamSet {
                weights: gw,
                biases: gb,
            },
        )
    }

    fn check_batch(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<()> {
        if inputs.nrows() == 0 {
            return Err(Error::Data("empty training batch".into()));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension {
                expected: inputs.nrows(),
                got: targets.nrows(),
            });
        }
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        if targets.ncols() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: targets.ncols(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input".into()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite target".into()));
        }
        Ok(())
    }

    fn batch_gradient(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        exec: Execution,
    ) -> (f64, ParamSet) {
        let n = inputs.nrows();
        let scale = 1.0 / (n * self.output_dim()) as f64;
        let parts = par::map_ranges(exec, n, GRAD_CHUNK, |r| {
            self.chunk_gradient(
                inputs.slice(s![r.clone(), ..]),
                targets.slice(s![r, ..]),
                scale,
            )
        });
        let mut parts = parts.into_iter();
        let (mut sq_err, mut grad) = parts.next().expect("non-empty batch");
        for (sq, g) in parts {
            sq_err += sq;
            grad.add_assign(&g);
        }
        (sq_err * scale, grad)
    }

    /// Mean-squared error over all outputs and its gradient, flattened in
    /// checkpoint order. Does not modify the network.
    pub fn mse_gradient(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(inputs, targets)?;
        let (loss, grad) = self.batch_gradient(inputs, targets, Execution::default());
        Ok((loss, grad.flatten()))
    }

    /// One optimiser step on the mean-squared error; returns the loss before
    /// the step.
    pub fn train_batch(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        opt: &mut Adam,
    ) -> Result<f64> {
        let x = rows_to_array(inputs, self.input_dim())?;
        let t = rows_to_array(targets, self.output_dim())?;
        self.train_batch_array(x.view(), t.view(), opt, Execution::default())
    }

    pub fn train_batch_array(
        &mut self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        opt: &mut Adam,
        exec: Execution,
    ) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let (loss, grad) = self.batch_gradient(inputs, targets, exec);
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric("non-finite gradient, step rejected".into()));
        }
        opt.apply(self, grad)?;
        Ok(loss)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FORMAT_MAGIC} {FORMAT_VERSION}")?;
        let sizes: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        writeln!(w, "layers {}", sizes.join(" "))?;
        writeln!(w, "activation {}", self.activation.name())?;
        for p in self.params() {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    /// Reads one network written by [`Network::write_text`], consuming
    /// exactly its lines from `r`.
    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(Error::Parse("unexpected end of network checkpoint".into()));
            }
            Ok(())
        };

        next_line(&mut line)?;
        let header: Vec<&str> = line.split_whitespace().collect();
        match header.as_slice() {
            [FORMAT_MAGIC, v] if v.parse() == Ok(FORMAT_VERSION) => {}
            _ => {
                return Err(Error::Parse(format!(
                    "bad network header `{}`",
                    line.trim()
                )))
            }
        }

        next_line(&mut line)?;
        let sizes = line
            .trim()
            .strip_prefix("layers")
            .ok_or_else(|| Error::Parse("missing `layers` line".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("layer size `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        validate_sizes(&sizes)?;

        next_line(&mut line)?;
        let activation = Activation::parse(
            line.trim()
                .strip_prefix("activation")
                .ok_or_else(|| Error::Parse("missing `activation` line".into()))?
                .trim(),
        )?;

        let count: usize = sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            next_line(&mut line)?;
            let t = line.trim();
            params.push(
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("parameter `{t}`: {e}")))?,
            );
        }
        Network::from_params(&sizes, activation, &params)
    }
}

/// Copies `src` parameters into `dst`; used for target-network syncs.
pub fn clone_weights(src: &Network, dst: &mut Network) -> Result<()> {
    dst.copy_from(src)
}

/// Stacks equally sized rows into a matrix.
pub fn rows_to_array(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for row in rows {
        if row.len() != width {
            return Err(Error::Dimension {
                expected: width,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(Array2::from_shape_vec((rows.len(), width), flat).expect("length checked"))
}

/// Tensors shaped like a network's parameters (gradients, Adam moments).
#[derive(Clone, Debug)]
struct ParamSet {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl ParamSet {
    fn zeros_like(net: &Network) -> Self {
        ParamSet {
            weights: net
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    fn same_shape(&self, net: &Network) -> bool {
        self.weights.len() == net.weights.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(a, b)| a.dim() == b.dim())
    }
}

/// Adam optimiser state for one network.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Gradients with a larger L2 norm are rescaled to this norm.
    pub max_grad_norm: Option<f64>,
    step: u64,
    moments: Option<(ParamSet, ParamSet)>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: Some(10.0),
            step: 0,
            moments: None,
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    fn apply(&mut self, net: &mut Network, mut grad: ParamSet) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some((m, _)) = &self.moments {
            if !m.same_shape(net) {
                return Err(Error::Config(
                    "optimiser state belongs to a different network shape".into(),
                ));
            }
        }
        if let Some(max) = self.max_grad_norm {
            let norm = grad.norm();
            if norm > max {
                grad.scale(max / norm);
            }
        }

        self.step += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let bias1 = 1.0 - b1.powi(self.step.min(i32::MAX as u64) as i32);
        let bias2 = 1.0 - b2.powi(self.step.min(i32::MAX as u64) as i32);
        let (m, v) = self
            .moments
            .get_or_insert_with(|| (ParamSet::zeros_like(net), ParamSet::zeros_like(net)));

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grad.weights[l])
                .and(&mut m.weights[l])
                .and(&mut v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grad.biases[l])
                .and(&mut m.biases[l])
                .and(&mut v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}
