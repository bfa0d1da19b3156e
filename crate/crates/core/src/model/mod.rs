//! Dense softmax classifiers: multinomial logistic regression and MLPs.
//!
//! Parameters live in one flat vector `theta`, laid out layer by layer from
//! input to output. Each layer contributes its weight matrix in row-major
//! order (`out x in`, so row `c` holds the weights of output unit `c`),
//! followed by its bias vector when biases are enabled. Every gradient-based
//! metric relies on this layout being stable.

mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::seed;

pub use train::{train, TrainConfig, TrainSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

fn default_bias() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub class_count: usize,
    /// Hidden layer widths; empty means logistic regression.
    #[serde(default)]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub l2_penalty: f64,
    #[serde(default = "default_bias")]
    pub bias: bool,
}

impl ModelSpec {
    pub fn logreg(input_dim: usize, class_count: usize) -> Self {
        ModelSpec {
            input_dim,
            class_count,
            hidden_layers: Vec::new(),
            activation: Activation::Relu,
            l2_penalty: 0.0,
            bias: true,
        }
    }

    pub fn mlp(input_dim: usize, class_count: usize, hidden: &[usize], activation: Activation) -> Self {
        ModelSpec {
            input_dim,
            class_count,
            hidden_layers: hidden.to_vec(),
            activation,
            l2_penalty: 0.0,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn with_l2(mut self, penalty: f64) -> Self {
        self.l2_penalty = penalty;
        self
    }

    pub fn is_logreg(&self) -> bool {
        self.hidden_layers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::invalid("class count must be at least 2"));
        }
        if self.input_dim < 1 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if self.hidden_layers.iter().any(|&w| w < 1) {
            return Err(Error::invalid("hidden layer widths must be at least 1"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::invalid("l2 penalty must be a finite nonnegative number"));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(self.class_count);
        w
    }

    fn layout(&self) -> Vec<Layer> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let weights = offset;
                offset += fan_in * fan_out;
                let bias = self.bias.then(|| {
                    let b = offset;
                    offset += fan_out;
                    b
                });
                Layer {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths()
            .windows(2)
            .map(|p| p[0] * p[1] + if self.bias { p[1] } else { 0 })
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: Option<usize>,
}

/// Which representation a similarity metric compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMapId {
    Input,
    LastHidden,
    AllHidden,
}

impl FeatureMapId {
    pub fn token(self) -> &'static str {
        match self {
            FeatureMapId::Input => "x",
            FeatureMapId::LastHidden => "last",
            FeatureMapId::AllHidden => "all",
        }
    }
}

/// Intermediate values of one forward pass.
struct Trace {
    /// `activations[0]` is the input, then one entry per hidden layer.
    activations: Vec<Vec<f64>>,
    /// Hidden pre-activations, aligned with `activations[1..]`.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    theta: Vec<f64>,
    layout: Vec<Layer>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.theta == other.theta
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    spec: ModelSpec,
    param_count: usize,
    theta: Vec<f64>,
}

const MODEL_FORMAT: &str = "relex-model";

impl Model {
    pub fn from_parts(spec: ModelSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_count();
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector contains non-finite entries"));
        }
        let layout = spec.layout();
        Ok(Model {
            spec,
            theta,
            layout,
        })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::from_parts(spec, vec![0.0; n])
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init_random(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = seed::rng(seed);
        for layer in model.layout.clone() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for w in &mut model.theta[layer.weights..layer.weights + layer.fan_in * layer.fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn is_logreg(&self) -> bool {
        self.spec.is_logreg()
    }

    /// Returns a copy with a new parameter vector of the same length.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.spec.clone(), theta)
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, layer: &Layer, input: &[f64]) -> Vec<f64> {
        let w = &self.theta[layer.weights..layer.weights + layer.fan_in * layer.fan_out];
        (0..layer.fan_out)
            .map(|o| {
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                let b = layer.bias.map_or(0.0, |b| self.theta[b + o]);
                b + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let act = self.spec.activation;
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layout.len().saturating_sub(1));
        let (last, hidden) = self.layout.split_last().expect("at least one layer");
        for layer in hidden {
            let z = self.layer_forward(layer, activations.last().unwrap());
            let h = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            activations.push(h);
        }
        let logits = self.layer_forward(last, activations.last().unwrap());
        Trace {
            activations,
            pre,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(x).logits)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Argmax of the predicted distribution; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Cross entropy `-log p(y | x)`, without the L2 penalty.
    pub fn loss(&self, z: &Instance) -> Result<f64> {
        self.check_label(z)?;
        let logits = self.logits(&z.features)?;
        Ok(log_sum_exp(&logits) - logits[z.label])
    }

    fn check_label(&self, z: &Instance) -> Result<()> {
        if z.label >= self.spec.class_count {
            return Err(Error::invalid(format!(
                "label {} out of range for {} classes",
                z.label, self.spec.class_count
            )));
        }
        Ok(())
    }

    /// Gradient of the cross entropy of one instance with respect to theta.
    pub fn loss_gradient(&self, z: &Instance) -> Result<Vec<f64>> {
        self.check_label(z)?;
        self.check_dim(&z.features)?;
        let mut grad = vec![0.0; self.theta.len()];
        self.accumulate_gradient(z, 1.0, &mut grad);
        Ok(grad)
    }

    /// Adds `weight * grad loss(z)` into `out` and returns the loss.
    /// Inputs must already be validated.
    pub(crate) fn accumulate_gradient(&self, z: &Instance, weight: f64, out: &mut [f64]) -> f64 {
        let trace = self.forward(&z.features);
        let probs = softmax(&trace.logits);
        let loss = log_sum_exp(&trace.logits) - trace.logits[z.label];
        let mut delta = probs;
        delta[z.label] -= 1.0;
        let act = self.spec.activation;
        for (l, layer) in self.layout.iter().enumerate().rev() {
            let input = &trace.activations[l];
            let w_start = layer.weights;
            for o in 0..layer.fan_out {
                let d = weight * delta[o];
                if d != 0.0 {
                    let row = &mut out[w_start + o * layer.fan_in..w_start + (o + 1) * layer.fan_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if let Some(b) = layer.bias {
                    out[b + o] += d;
                }
            }
            if l > 0 {
                let w = &self.theta[w_start..w_start + layer.fan_in * layer.fan_out];
                let z_prev = &trace.pre[l - 1];
                let mut back = vec![0.0; layer.fan_in];
                for o in 0..layer.fan_out {
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (bk, wv) in back.iter_mut().zip(row) {
                        *bk += delta[o] * wv;
                    }
                }
                for (bk, zp) in back.iter_mut().zip(z_prev) {
                    *bk *= act.derivative(*zp);
                }
                delta = back;
            }
        }
        loss
    }

    /// Mean cross entropy over `data` plus `(l2/2)·‖θ‖²`, with its gradient.
    pub fn objective_and_gradient(&self, data: &Dataset) -> Result<(f64, Vec<f64>)> {
        self.weighted_objective(data, None)
    }

    /// Same as [`Model::objective_and_gradient`] but each instance's loss is
    /// scaled by `weights[i]` before dividing by `N`.
    pub fn weighted_objective(&self, data: &Dataset, weights: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        self.check_dataset(data)?;
        if let Some(w) = weights {
            if w.len() != data.len() {
                return Err(Error::DimensionMismatch {
                    expected: data.len(),
                    actual: w.len(),
                });
            }
        }
        let n = data.len() as f64;
        let mut grad = vec![0.0; self.theta.len()];
        let mut loss = 0.0;
        for (i, z) in data.instances().iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]) / n;
            if w != 0.0 {
                loss += w * self.accumulate_gradient(z, w, &mut grad);
            }
        }
        let lam = self.spec.l2_penalty;
        if lam > 0.0 {
            loss += 0.5 * lam * self.theta.iter().map(|t| t * t).sum::<f64>();
            for (g, t) in grad.iter_mut().zip(&self.theta) {
                *g += lam * t;
            }
        }
        Ok((loss, grad))
    }

    pub(crate) fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: data.dim(),
            });
        }
        if data.class_count() > self.spec.class_count {
            return Err(Error::invalid(format!(
                "dataset has {} classes but model predicts {}",
                data.class_count(),
                self.spec.class_count
            )));
        }
        Ok(())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check_dataset(data)?;
        let correct = data
            .instances()
            .iter()
            .filter(|z| argmax(&softmax(&self.forward(&z.features).logits)) == z.label)
            .count();
        Ok(correct as f64 / data.len().max(1) as f64)
    }

    /// The representation a similarity metric compares.
    pub fn features(&self, x: &[f64], map: FeatureMapId) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if map != FeatureMapId::Input && self.is_logreg() {
            return Err(Error::invalid(format!(
                "feature map `{}` needs hidden layers; logistic regression has none",
                map.token()
            )));
        }
        Ok(match map {
            FeatureMapId::Input => x.to_vec(),
            FeatureMapId::LastHidden => self.forward(x).activations.pop().unwrap(),
            FeatureMapId::AllHidden => self.forward(x).activations[1..].concat(),
        })
    }

    /// Softmax output minus the one-hot label.
    pub fn residual(&self, z: &Instance) -> Result<Vec<f64>> {
        self.check_label(z)?;
        let mut r = self.predict_proba(&z.features)?;
        r[z.label] -= 1.0;
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: 1,
            spec: self.spec.clone(),
            param_count: self.theta.len(),
            theta: self.theta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::invalid(format!("not a model file (format `{}`)", file.format)));
        }
        if file.param_count != file.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: file.param_count,
                actual: file.theta.len(),
            });
        }
        Self::from_parts(file.spec, file.theta)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
