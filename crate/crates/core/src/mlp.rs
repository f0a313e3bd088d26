//! Feedforward classifier: dense layers, ReLU or sigmoid hidden units, a
//! two-way softmax output, and mini-batch SGD with momentum.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
            Activation::Softmax => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                z.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Derivative in terms of the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(a > 0.0)),
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Softmax => unreachable!("softmax is only used on the output layer"),
        }
    }
}

/// Dense layer `a = act(W x + b)` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::ModelFormat(format!(
                "{} biases for {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.rows()
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, b)| {
            b + self.weights.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
        self.activation.apply(out);
    }
}

/// Per-feature `(x - mean) / std` applied before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Statistics of `x`; constant columns get `std = 1`.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut mean = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn identity(width: usize) -> Self {
        Standardization {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
    }
}

/// A trained network `f`. The last layer is a two-unit softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    standardization: Standardization,
    seed: u64,
}

/// Post-activation values of each hidden layer, `n_samples × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<Matrix>,
}

/// Gradient of the mean cross-entropy, one entry per layer.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Assembles a model, checking that layer widths chain and that the
    /// output is a two-unit softmax preceded by at least one hidden layer.
    pub fn from_layers(layers: Vec<Layer>, standardization: Standardization, seed: u64) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::ModelFormat("need at least one hidden layer and an output layer".into()));
        }
        if standardization.mean.len() != layers[0].n_inputs() || standardization.std.len() != layers[0].n_inputs() {
            return Err(Error::ModelFormat("standardization width does not match the input layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_outputs() != pair[1].n_inputs() {
                return Err(Error::ModelFormat(format!(
                    "layer {i} has {} outputs but layer {} takes {} inputs",
                    pair[0].n_outputs(),
                    i + 1,
                    pair[1].n_inputs()
                )));
            }
        }
        let (hidden, output) = layers.split_at(layers.len() - 1);
        if hidden.iter().any(|l| l.activation == Activation::Softmax) {
            return Err(Error::ModelFormat("softmax is only allowed on the output layer".into()));
        }
        if output[0].activation != Activation::Softmax || output[0].n_outputs() != N_CLASSES {
            return Err(Error::ModelFormat("output layer must be a two-unit softmax".into()));
        }
        Ok(MlpModel {
            layers,
            standardization,
            seed,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_inputs()
    }

    /// Number of hidden layers `d`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Hidden-layer widths.
    pub fn topology(&self) -> Vec<usize> {
        self.layers[..self.depth()].iter().map(Layer::n_outputs).collect()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_inputs() {
            return Err(Error::Shape {
                expected: self.n_inputs(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Runs one sample, keeping every layer's output (`acts[0]` is the
    /// standardized input).
    fn forward_sample(&self, row: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.layers.len() + 1, Vec::new);
        let (first, rest) = acts.split_at_mut(1);
        self.standardization.apply(row, &mut first[0]);
        let mut prev = &first[0];
        for (layer, out) in self.layers.iter().zip(rest.iter_mut()) {
            layer.forward_into(prev, out);
            prev = out;
        }
    }

    /// Softmax outputs, `n × 2`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut out = Matrix::zeros(x.rows(), N_CLASSES);
        let mut acts = Vec::new();
        for (i, row) in x.iter_rows().enumerate() {
            self.forward_sample(row, &mut acts);
            out.row_mut(i).copy_from_slice(&acts[self.layers.len()]);
        }
        Ok(out)
    }

    /// Argmax labels; a tie goes to class 0.
    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(x)?.iter_rows().map(|p| u8::from(p[1] > p[0])).collect())
    }

    pub fn hidden_activations(&self, x: &Matrix) -> Result<ActivationTrace> {
        self.check_width(x)?;
        let d = self.depth();
        let mut layers: Vec<Matrix> = self.layers[..d].iter().map(|l| Matrix::zeros(x.rows(), l.n_outputs())).collect();
        let mut acts = Vec::new();
        for (i, row) in x.iter_rows().enumerate() {
            self.forward_sample(row, &mut acts);
            for (k, m) in layers.iter_mut().enumerate() {
                m.row_mut(i).copy_from_slice(&acts[k + 1]);
            }
        }
        Ok(ActivationTrace { layers })
    }

    /// Mean cross-entropy over the rows of `x` and its gradient.
    pub fn loss_and_gradients(&self, x: &Matrix, y: &[u8]) -> Result<(f64, Gradients)> {
        self.check_width(x)?;
        if y.len() != x.rows() {
            return Err(Error::Parameter(format!("{} labels for {} samples", y.len(), x.rows())));
        }
        let rows: Vec<usize> = (0..x.rows()).collect();
        let mut grads = self.zero_gradients();
        let loss = self.accumulate(x, y, &rows, &mut grads, &mut Vec::new(), &mut Vec::new());
        Ok((loss, grads))
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| Matrix::zeros(l.n_outputs(), l.n_inputs())).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.n_outputs()]).collect(),
        }
    }

    /// Adds the mean-loss gradient over `rows` into `grads` (which must be
    /// zeroed) and returns the mean loss.
    fn accumulate(
        &self,
        x: &Matrix,
        y: &[u8],
        rows: &[usize],
        grads: &mut Gradients,
        acts: &mut Vec<Vec<f64>>,
        delta: &mut Vec<f64>,
    ) -> f64 {
        let scale = 1.0 / rows.len() as f64;
        let n_layers = self.layers.len();
        let mut loss = 0.0;
        let mut next_delta = Vec::new();
        for &i in rows {
            self.forward_sample(x.row(i), acts);
            let target = y[i] as usize;
            let probs = &acts[n_layers];
            loss -= probs[target].max(f64::MIN_POSITIVE).ln();
            // softmax + cross-entropy: dL/dz = p - onehot
            delta.clear();
            delta.extend(probs.iter().enumerate().map(|(c, p)| (p - f64::from(u8::from(c == target))) * scale));
            for l in (0..n_layers).rev() {
                let input = &acts[l];
                let gw = &mut grads.weights[l];
                for (r, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        gw.row_mut(r).iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    }
                    grads.bias[l][r] += d;
                }
                if l == 0 {
                    break;
                }
                let layer = &self.layers[l];
                let below = self.layers[l - 1].activation;
                next_delta.clear();
                next_delta.resize(layer.n_inputs(), 0.0);
                for (r, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        next_delta.iter_mut().zip(layer.weights.row(r)).for_each(|(nd, w)| *nd += d * w);
                    }
                }
                for (nd, a) in next_delta.iter_mut().zip(input) {
                    *nd *= below.derivative(*a);
                }
                std::mem::swap(delta, &mut next_delta);
            }
        }
        loss * scale
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Versioned JSON with every float stored as its 16-digit hex bit pattern.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            seed: self.seed,
            standardization: StandardizationFile {
                mean: encode(&self.standardization.mean),
                std: encode(&self.standardization.std),
            },
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    inputs: l.n_inputs(),
                    outputs: l.n_outputs(),
                    activation: l.activation,
                    weights: encode(l.weights.as_slice()),
                    bias: encode(&l.bias),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("unreadable model file: {e}")))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                let weights = decode(&l.weights)?;
                if weights.len() != l.inputs * l.outputs {
                    return Err(Error::ModelFormat(format!(
                        "layer declares {}x{} weights but stores {}",
                        l.outputs,
                        l.inputs,
                        weights.len()
                    )));
                }
                Layer::new(Matrix::from_vec(l.outputs, l.inputs, weights), decode(&l.bias)?, l.activation)
                    .map_err(|e| Error::ModelFormat(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let standardization = Standardization {
            mean: decode(&file.standardization.mean)?,
            std: decode(&file.standardization.std)?,
        };
        MlpModel::from_layers(layers, standardization, file.seed)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    seed: u64,
    standardization: StandardizationFile,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StandardizationFile {
    mean: Vec<String>,
    std: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<String>,
    bias: Vec<String>,
}

fn encode(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format!("{:016x}", v.to_bits())).collect()
}

fn decode(values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|s| {
            if s.len() != 16 {
                return Err(Error::ModelFormat(format!("bad float encoding {s:?}")));
            }
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::ModelFormat(format!("bad float encoding {s:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden-layer widths.
    pub topology: Vec<usize>,
    pub hidden_activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// L2 penalty on weights (not biases), added to the gradient.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            topology: vec![64, 32],
            hidden_activation: Activation::Sigmoid,
            epochs: 400,
            learning_rate: 0.2,
            momentum: 0.9,
            batch_size: 32,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.topology.is_empty() || self.topology.contains(&0) {
            return bad(format!("topology must list at least one positive width, got {:?}", self.topology));
        }
        if self.hidden_activation == Activation::Softmax {
            return bad("hidden_activation must be relu or sigmoid".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

/// A trained model and its mean training loss after each epoch.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: MlpModel,
    pub epoch_losses: Vec<f64>,
}

/// Trains a binary classifier on `ds`. He-normal initialisation and batch
/// order both come from a ChaCha stream seeded with `cfg.seed`.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<Training> {
    cfg.validate()?;
    if ds.n_samples() == 0 {
        return Err(Error::Parameter("cannot train on an empty dataset".into()));
    }
    if let Some(v) = ds.labels().iter().find(|&&v| v > 1) {
        return Err(Error::UnsupportedTask(format!("label {v}: only binary classification is supported")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![ds.n_features()];
    widths.extend(&cfg.topology);
    widths.push(N_CLASSES);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let sd = (2.0 / fan_in.max(1) as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let activation = if i + 2 == widths.len() {
                Activation::Softmax
            } else {
                cfg.hidden_activation
            };
            Layer::new(Matrix::from_vec(fan_out, fan_in, weights), vec![0.0; fan_out], activation)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = MlpModel::from_layers(layers, Standardization::fit(ds.features()), cfg.seed)?;

    let x = ds.features();
    let y = ds.labels();
    let mut velocity = model.zero_gradients();
    let mut grads = model.zero_gradients();
    let mut order: Vec<usize> = (0..ds.n_samples()).collect();
    let (mut acts, mut delta) = (Vec::new(), Vec::new());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in grads.weights.iter_mut() {
                g.as_mut_slice().fill(0.0);
            }
            for g in grads.bias.iter_mut() {
                g.fill(0.0);
            }
            let loss = model.accumulate(x, y, batch, &mut grads, &mut acts, &mut delta);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                step(layer.weights.as_mut_slice(), velocity.weights[l].as_mut_slice(), grads.weights[l].as_slice(), cfg.weight_decay, cfg);
                step(&mut layer.bias, &mut velocity.bias[l], &grads.bias[l], 0.0, cfg);
            }
        }
        let mean = total / ds.n_samples() as f64;
        if !mean.is_finite() || model.layers.iter().any(|l| l.weights.as_slice().iter().any(|w| !w.is_finite())) {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(Training { model, epoch_losses })
}

fn step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], decay: f64, cfg: &TrainConfig) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = cfg.momentum * *v - cfg.learning_rate * (g + decay * *p);
        *p += *v;
    }
}
