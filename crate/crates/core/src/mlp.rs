//! Multilayer perceptron regressor: ReLU hidden layers, identity output,
//! squared-error loss with an L2 weight penalty, trained by mini-batch Adam.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fit_standardizer, mean_and_std, DatasetError, StandardizationParams, TabularDataset};
use crate::matrix::Matrix;
use crate::rng::{uniform_at, Stream};

const INIT_TAG: u64 = 0x1A17;
const SHUFFLE_TAG: u64 = 0x5EED;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("too few samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    /// Input width, hidden widths, output width (always 1).
    pub layer_sizes: Vec<usize>,
}

impl MlpArchitecture {
    /// Input of width `inputs` followed by the given hidden layers.
    pub fn new(inputs: usize, hidden: &[usize]) -> Self {
        let mut layer_sizes = vec![inputs];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        Self { layer_sizes }
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let s = &self.layer_sizes;
        if s.len() < 3 {
            return Err(MlpError::BadArchitecture("need at least one hidden layer".into()));
        }
        if *s.last().unwrap() != 1 {
            return Err(MlpError::BadArchitecture("output layer must have width 1".into()));
        }
        if s.contains(&0) {
            return Err(MlpError::BadArchitecture("layer widths must be positive".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_HIDDEN: [usize; 3] = [10, 5, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    /// `min(200, n)`.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpTrainConfig {
    pub hidden: Vec<usize>,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub learning_rate: f64,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub alpha_l2: f64,
    pub max_iter: usize,
    pub batch_size: BatchSize,
    pub shuffle: bool,
    pub seed: u64,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub tol: f64,
    pub n_iter_no_change: usize,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub beta1: f64,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub beta2: f64,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub epsilon: f64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: 0.001,
            alpha_l2: 0.0001,
            max_iter: 5000,
            batch_size: BatchSize::Auto,
            shuffle: true,
            seed: 42,
            tol: 1e-6,
            n_iter_no_change: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl MlpTrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::BadConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.alpha_l2 >= 0.0 && self.alpha_l2.is_finite()) {
            return bad("alpha_l2 must be non-negative");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return bad("batch size must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        Ok(())
    }

    fn batch(&self, n: usize) -> usize {
        match self.batch_size {
            BatchSize::Auto => n.min(200),
            BatchSize::Fixed(b) => b,
        }
    }
}

/// Layer `l` maps width `sizes[l]` to `sizes[l + 1]`; `weights[l]` is
/// `sizes[l] x sizes[l + 1]` and activations are row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub arch: MlpArchitecture,
    pub weights: Vec<Matrix>,
    #[serde(with = "crate::hexfloat::serde_vecs")]
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<MlpTrainConfig>,
    #[serde(with = "crate::hexfloat::serde_vec")]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// He-uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
/// Entry `(i, j)` of layer `l` uses `uniform_at(seed, [INIT_TAG, l, i, j])`.
pub fn init_mlp(arch: &MlpArchitecture, seed: u64) -> Result<MlpModel, MlpError> {
    arch.validate()?;
    let s = &arch.layer_sizes;
    let mut weights = Vec::with_capacity(s.len() - 1);
    let mut biases = Vec::with_capacity(s.len() - 1);
    for l in 0..s.len() - 1 {
        let bound = (6.0 / s[l] as f64).sqrt();
        let mut w = Matrix::zeros(s[l], s[l + 1]);
        for i in 0..s[l] {
            for j in 0..s[l + 1] {
                let u = uniform_at(seed, &[INIT_TAG, l as u64, i as u64, j as u64]);
                w.set(i, j, (2.0 * u - 1.0) * bound);
            }
        }
        weights.push(w);
        biases.push(vec![0.0; s[l + 1]]);
    }
    Ok(MlpModel {
        arch: arch.clone(),
        weights,
        biases,
        config: None,
        loss_history: Vec::new(),
    })
}

impl MlpModel {
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, x: &Matrix) -> Result<(), MlpError> {
        if x.cols() != self.arch.inputs() {
            return Err(MlpError::DimensionMismatch {
                expected: self.arch.inputs(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Activations of every layer for the given rows, input included.
    fn activations(&self, x: &Matrix, rows: &[usize]) -> Vec<Vec<f64>> {
        let m = rows.len();
        let mut acts = Vec::with_capacity(self.layers() + 1);
        let mut a0 = Vec::with_capacity(m * x.cols());
        for &r in rows {
            a0.extend_from_slice(x.row(r));
        }
        acts.push(a0);
        for l in 0..self.layers() {
            let w = &self.weights[l];
            let (fan_in, fan_out) = (w.rows(), w.cols());
            let prev = &acts[l];
            let mut z = vec![0.0; m * fan_out];
            for s in 0..m {
                let out = &mut z[s * fan_out..(s + 1) * fan_out];
                out.copy_from_slice(&self.biases[l]);
                for i in 0..fan_in {
                    let a = prev[s * fan_in + i];
                    if a != 0.0 {
                        for (o, wij) in out.iter_mut().zip(w.row(i)) {
                            *o += a * wij;
                        }
                    }
                }
            }
            if l + 1 < self.layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    fn weight_sq_sum(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Loss and gradients on the listed rows. Samples are accumulated in
    /// list order, so the result is reproducible bit for bit.
    fn loss_grad_rows(&self, x: &Matrix, y: &[f64], rows: &[usize], alpha: f64) -> (f64, MlpGradients) {
        let m = rows.len() as f64;
        let acts = self.activations(x, rows);
        let out = acts.last().unwrap();
        let mut data_loss = 0.0;
        let mut delta: Vec<f64> = Vec::with_capacity(rows.len());
        for (s, &r) in rows.iter().enumerate() {
            let e = out[s] - y[r];
            data_loss += e * e;
            delta.push(e / m);
        }
        let loss = data_loss / (2.0 * m) + alpha / (2.0 * m) * self.weight_sq_sum();

        let mut gw: Vec<Matrix> = self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        for l in (0..self.layers()).rev() {
            let w = &self.weights[l];
            let (fan_in, fan_out) = (w.rows(), w.cols());
            let a_prev = &acts[l];
            for s in 0..rows.len() {
                let d = &delta[s * fan_out..(s + 1) * fan_out];
                for (g, dv) in gb[l].iter_mut().zip(d) {
                    *g += dv;
                }
                for i in 0..fan_in {
                    let a = a_prev[s * fan_in + i];
                    if a != 0.0 {
                        for (g, dv) in gw[l].row_mut(i).iter_mut().zip(d) {
                            *g += a * dv;
                        }
                    }
                }
            }
            for (g, wv) in gw[l].as_mut_slice().iter_mut().zip(w.as_slice()) {
                *g += alpha / m * wv;
            }
            if l > 0 {
                let mut next = vec![0.0; rows.len() * fan_in];
                for s in 0..rows.len() {
                    let d = &delta[s * fan_out..(s + 1) * fan_out];
                    for i in 0..fan_in {
                        // ReLU derivative: the previous layer is hidden.
                        if a_prev[s * fan_in + i] > 0.0 {
                            next[s * fan_in + i] = w.row(i).iter().zip(d).map(|(a, b)| a * b).sum();
                        }
                    }
                }
                delta = next;
            }
        }
        (loss, MlpGradients { weights: gw, biases: gb })
    }
}

pub fn forward(model: &MlpModel, x: &Matrix) -> Result<Vec<f64>, MlpError> {
    model.check_input(x)?;
    let rows: Vec<usize> = (0..x.rows()).collect();
    Ok(model.activations(x, &rows).pop().unwrap())
}

pub fn predict_mlp(model: &MlpModel, x: &Matrix) -> Result<Vec<f64>, MlpError> {
    forward(model, x)
}

/// `sum (f(x) - y)^2 / (2n) + alpha / (2n) * sum w^2` over all rows, with
/// gradients by backpropagation. Biases are not penalized.
pub fn loss_and_gradient(
    model: &MlpModel,
    x: &Matrix,
    y: &[f64],
    alpha_l2: f64,
) -> Result<(f64, MlpGradients), MlpError> {
    model.check_input(x)?;
    if y.len() != x.rows() {
        return Err(MlpError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(MlpError::TooFewSamples { needed: 1, have: 0 });
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    Ok(model.loss_grad_rows(x, y, &rows, alpha_l2))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let sizes: Vec<usize> = model
            .weights
            .iter()
            .map(|w| w.as_slice().len())
            .chain(model.biases.iter().map(Vec::len))
            .collect();
        Self {
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &MlpGradients, cfg: &MlpTrainConfig) {
        self.t += 1;
        let step = cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt() / (1.0 - cfg.beta1.powi(self.t));
        let params = model
            .weights
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(model.biases.iter_mut().map(Vec::as_mut_slice));
        let gs = grads
            .weights
            .iter()
            .map(Matrix::as_slice)
            .chain(grads.biases.iter().map(Vec::as_slice));
        for (k, (p, g)) in params.zip(gs).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Mini-batch Adam. Each epoch visits every row once (reshuffled from
/// `Stream(seed, [SHUFFLE_TAG, epoch])` when `shuffle` is set) and records
/// the sample-weighted mean of the batch losses. Training stops after
/// `max_iter` epochs, or once `n_iter_no_change` consecutive epochs fail to
/// beat the best loss so far by more than `tol`.
pub fn train_mlp(x: &Matrix, y: &[f64], arch: &MlpArchitecture, cfg: &MlpTrainConfig) -> Result<MlpModel, MlpError> {
    cfg.validate()?;
    arch.validate()?;
    if x.cols() != arch.inputs() {
        return Err(MlpError::DimensionMismatch {
            expected: arch.inputs(),
            found: x.cols(),
        });
    }
    if y.len() != x.rows() {
        return Err(MlpError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = x.rows();
    let batch = cfg.batch(n);
    if n == 0 || n < batch {
        return Err(MlpError::TooFewSamples {
            needed: batch.max(1),
            have: n,
        });
    }
    let mut model = init_mlp(arch, cfg.seed)?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.max_iter {
        if cfg.shuffle {
            Stream::new(cfg.seed, &[SHUFFLE_TAG, epoch as u64]).shuffle(&mut order);
        }
        let mut total = 0.0;
        for rows in order.chunks(batch) {
            let (loss, grads) = model.loss_grad_rows(x, y, rows, cfg.alpha_l2);
            if !loss.is_finite() {
                return Err(MlpError::Diverged { epoch, loss });
            }
            total += loss * rows.len() as f64;
            adam.step(&mut model, &grads, cfg);
        }
        let loss = total / n as f64;
        if !loss.is_finite() || model.weight_sq_sum().is_nan() {
            return Err(MlpError::Diverged { epoch, loss });
        }
        model.loss_history.push(loss);
        if loss > best - cfg.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(loss);
        if stale >= cfg.n_iter_no_change {
            break;
        }
    }
    model.config = Some(cfg.clone());
    Ok(model)
}

/// An MLP bundled with its input selection and scaling: features are picked
/// by name, standardized with parameters fitted on the training rows, and
/// the target is standardized for training and mapped back on prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub features: Vec<String>,
    pub standardizer: StandardizationParams,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub target_mean: f64,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub target_std: f64,
    pub net: MlpModel,
}

impl MlpRegressor {
    pub fn fit(ds: &TabularDataset, features: &[String], cfg: &MlpTrainConfig) -> Result<Self, MlpError> {
        cfg.validate()?;
        let sub = ds.select_features(features)?;
        let standardizer = fit_standardizer(&sub)?;
        let x = standardizer.transform(sub.features())?;
        let (target_mean, sd) = mean_and_std(ds.target());
        let target_std = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        let y: Vec<f64> = ds.target().iter().map(|v| (v - target_mean) / target_std).collect();
        let arch = MlpArchitecture::new(features.len(), &cfg.hidden);
        let net = train_mlp(&x, &y, &arch, cfg)?;
        Ok(Self {
            features: features.to_vec(),
            standardizer,
            target_mean,
            target_std,
            net,
        })
    }

    /// Predictions in target units.
    pub fn predict(&self, ds: &TabularDataset) -> Result<Vec<f64>, MlpError> {
        let x = ds.feature_matrix(&self.features)?;
        let x = self.standardizer.transform(&x)?;
        Ok(predict_mlp(&self.net, &x)?
            .into_iter()
            .map(|p| p * self.target_std + self.target_mean)
            .collect())
    }
}
