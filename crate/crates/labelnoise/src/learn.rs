//! Linear classifiers under noise-aware losses.
//!
//! Three training regimes are supported on the same one-layer model:
//! plain cross-entropy (logistic loss on the signed margin for binary
//! problems, softmax for K > 2), the noise-corrected surrogate loss
//!
//! ```text
//! ℓ̃(h(x), ỹ) = (1 − ẽ_{−ỹ})·ℓ(h(x), ỹ) − ẽ_{ỹ}·ℓ(h(x), −ỹ)
//! ```
//!
//! which is unbiased for the clean risk (up to a constant factor) when the
//! plug-in rates match the true ones, and peer loss, which subtracts the
//! loss of randomly re-paired (feature, label) samples and needs no rate
//! estimates at all. Training is deterministic mini-batch SGD.

use crate::data::{LabeledDataset, NoiseSpec, TransitionMatrix};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;

/// A linear classifier: a single weight row and bias for binary problems
/// (positive margin ⇒ class 1), or K rows of logits for K > 2 (argmax,
/// ties to the smaller class id).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<f64>, // rows × dim, row-major
    bias: Vec<f64>,    // rows
    dim: usize,
    class_count: usize,
}

impl LinearModel {
    fn rows(class_count: usize) -> usize {
        if class_count == 2 {
            1
        } else {
            class_count
        }
    }

    /// The zero model.
    pub fn zeros(dim: usize, class_count: usize) -> Result<Self> {
        if dim == 0 || class_count < 2 {
            return Err(Error::InvalidConfig(
                "a model needs dim ≥ 1 and at least 2 classes".into(),
            ));
        }
        let rows = Self::rows(class_count);
        Ok(LinearModel {
            weights: vec![0.0; rows * dim],
            bias: vec![0.0; rows],
            dim,
            class_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// The signed margin `w·x + b` of a binary model.
    pub fn margin(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.class_count, 2);
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[0]
    }

    /// Per-class logits (length 1 for binary models).
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let rows = Self::rows(self.class_count);
        (0..rows)
            .map(|r| {
                self.weights[r * self.dim..(r + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.bias[r]
            })
            .collect()
    }

    /// Predicted class id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        if self.class_count == 2 {
            u32::from(self.margin(x) > 0.0)
        } else {
            let logits = self.logits(x);
            let mut best = 0usize;
            for (k, &z) in logits.iter().enumerate() {
                if z > logits[best] {
                    best = k;
                }
            }
            best as u32
        }
    }

    /// Flat parameter vector: all weight rows, then all biases. The layout
    /// matches the gradient returned by [`batch_objective`].
    pub fn to_parameters(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    /// Rebuild a model from the flat layout of [`Self::to_parameters`].
    pub fn from_parameters(dim: usize, class_count: usize, params: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(dim, class_count)?;
        let rows = Self::rows(class_count);
        if params.len() != rows * dim + rows {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a {rows}×{dim} (+{rows} bias) model",
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("model parameter {bad}")));
        }
        m.weights.copy_from_slice(&params[..rows * dim]);
        m.bias.copy_from_slice(&params[rows * dim..]);
        Ok(m)
    }

    /// Write the model as a plain-text key/value file; floats use shortest
    /// round-trip form so [`Self::load`] reproduces the model exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "classes = {}", self.class_count);
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "bias = {}", join(&self.bias));
        let _ = writeln!(out, "weights = {}", join(&self.weights));
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a model written by [`Self::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let perr = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut dim = None;
        let mut classes = None;
        let mut bias = None;
        let mut weights = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(line_no, format!("expected `key = value`, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "dim" => {
                    dim = Some(value.parse::<usize>().map_err(|_| {
                        perr(line_no, format!("`{value}` is not a dimension"))
                    })?)
                }
                "classes" => {
                    classes = Some(value.parse::<usize>().map_err(|_| {
                        perr(line_no, format!("`{value}` is not a class count"))
                    })?)
                }
                "bias" | "weights" => {
                    let vals = value
                        .split_whitespace()
                        .map(|t| {
                            t.parse::<f64>()
                                .map_err(|_| perr(line_no, format!("`{t}` is not numeric")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    if key.trim() == "bias" {
                        bias = Some(vals);
                    } else {
                        weights = Some(vals);
                    }
                }
                other => return Err(perr(line_no, format!("unknown key `{other}`"))),
            }
        }
        let dim = dim.ok_or_else(|| perr(0, "missing `dim`".into()))?;
        let classes = classes.ok_or_else(|| perr(0, "missing `classes`".into()))?;
        let mut params = weights.ok_or_else(|| perr(0, "missing `weights`".into()))?;
        params.extend(bias.ok_or_else(|| perr(0, "missing `bias`".into()))?);
        Self::from_parameters(dim, classes, &params)
    }
}

/// Which loss drives training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    /// Noise-corrected surrogate with plug-in rate estimates; binary only.
    Corrected { e_tilde_plus: f64, e_tilde_minus: f64 },
    /// Peer loss `ℓ(h(xₙ), ỹₙ) − α·ℓ(h(x_{p1}), ỹ_{p2})` with freshly drawn
    /// uniform peer indices every step.
    Peer { alpha: f64, peer_seed: u64 },
}

impl LossSpec {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        match *self {
            LossSpec::CrossEntropy => Ok(()),
            LossSpec::Corrected { e_tilde_plus, e_tilde_minus } => {
                if class_count != 2 {
                    return Err(Error::InvalidConfig(
                        "the corrected loss is defined for binary labels only".into(),
                    ));
                }
                for (name, v) in [("e_tilde_plus", e_tilde_plus), ("e_tilde_minus", e_tilde_minus)]
                {
                    if !(0.0..0.5).contains(&v) {
                        return Err(Error::InvalidConfig(format!(
                            "{name} = {v} outside [0, 0.5)"
                        )));
                    }
                }
                if e_tilde_plus + e_tilde_minus >= 1.0 {
                    return Err(Error::InvalidConfig(
                        "corrected-loss rates must sum below 1".into(),
                    ));
                }
                Ok(())
            }
            LossSpec::Peer { alpha, .. } => {
                if !alpha.is_finite() || alpha < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "peer alpha = {alpha} must be ≥ 0"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient of the `0.5·λ·‖w‖²` penalty (biases exempt).
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be ≥ 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "l2_penalty = {} must be ≥ 0",
                self.l2_penalty
            )));
        }
        Ok(())
    }
}

/// A trained model plus the mean training loss recorded per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub epoch_losses: Vec<f64>,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss of a signed margin: `ln(1 + exp(−s·m))`.
fn logistic_loss(margin: f64, sign: f64) -> f64 {
    softplus(-sign * margin)
}

/// d logistic_loss / d margin.
fn logistic_dmargin(margin: f64, sign: f64) -> f64 {
    -sign * sigmoid(-sign * margin)
}

fn sign_of(label: u32) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// The corrected surrogate loss given the base losses under both labels:
/// for observed sign s, `(1 − ẽ_{−s})·ℓ_s − ẽ_s·ℓ_{−s}`. The value may be
/// negative; that is intentional and required for unbiasedness.
pub fn corrected_loss(
    loss_pos: f64,
    loss_neg: f64,
    observed_sign: i32,
    e_tilde_plus: f64,
    e_tilde_minus: f64,
) -> Result<f64> {
    LossSpec::Corrected { e_tilde_plus, e_tilde_minus }.validate(2)?;
    match observed_sign {
        1 => Ok((1.0 - e_tilde_minus) * loss_pos - e_tilde_plus * loss_neg),
        -1 => Ok((1.0 - e_tilde_plus) * loss_neg - e_tilde_minus * loss_pos),
        other => Err(Error::InvalidConfig(format!(
            "observed sign must be −1 or +1, got {other}"
        ))),
    }
}

/// Uniform peer pairs for one training step, deterministic in
/// `(peer_seed, step)`.
fn peer_pairs(n: usize, count: usize, peer_seed: u64, step: u64) -> Vec<(usize, usize)> {
    let mut rng = rng::stream(rng::derive_seed(peer_seed, step), rng::TAG_PEER);
    (0..count)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect()
}

/// Mean peer loss of one batch: each sample's cross-entropy minus α times
/// the loss of a freshly paired (x_{p1}, ỹ_{p2}) drawn uniformly from the
/// whole dataset. Deterministic in `(peer_seed, step)`.
pub fn peer_loss_batch(
    model: &LinearModel,
    ds: &LabeledDataset,
    batch: &[usize],
    alpha: f64,
    peer_seed: u64,
    step: u64,
) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "peer loss needs a batch of ≥ 2 samples, got {}",
            batch.len()
        )));
    }
    let loss = LossSpec::Peer { alpha, peer_seed };
    loss.validate(ds.class_count())?;
    let (value, _) = batch_objective(model, ds, &loss, batch, 0.0, step)?;
    Ok(value)
}

/// The mean batch objective (data loss plus `0.5·λ·‖w‖²`) and its gradient
/// in the flat layout of [`LinearModel::to_parameters`] — exactly what one
/// SGD step computes. `step` feeds the peer-pair draw and is ignored by the
/// other losses.
pub fn batch_objective(
    model: &LinearModel,
    ds: &LabeledDataset,
    loss: &LossSpec,
    batch: &[usize],
    l2_penalty: f64,
    step: u64,
) -> Result<(f64, Vec<f64>)> {
    if model.dim() != ds.dim() || model.class_count() != ds.class_count() {
        return Err(Error::DimensionMismatch(format!(
            "model ({}d, {} classes) on data ({}d, {} classes)",
            model.dim(),
            model.class_count(),
            ds.dim(),
            ds.class_count()
        )));
    }
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    loss.validate(ds.class_count())?;
    let k = ds.class_count();
    let dim = ds.dim();
    let rows = LinearModel::rows(k);
    let labels = ds.noisy_labels();
    let mut grad = vec![0.0; rows * dim + rows];
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;

    // accumulate d(loss)/d(logit r) at features x into the gradient
    let mut add = |grad: &mut Vec<f64>, r: usize, x: &[f64], g: f64| {
        for (w, v) in grad[r * dim..(r + 1) * dim].iter_mut().zip(x) {
            *w += g * v;
        }
        grad[rows * dim + r] += g;
    };

    match *loss {
        LossSpec::CrossEntropy if k == 2 => {
            for &i in batch {
                let x = ds.feature_row(i);
                let m = model.margin(x);
                let s = sign_of(labels[i]);
                total += logistic_loss(m, s) * scale;
                add(&mut grad, 0, x, logistic_dmargin(m, s) * scale);
            }
        }
        LossSpec::CrossEntropy => {
            for &i in batch {
                let x = ds.feature_row(i);
                let z = model.logits(x);
                let y = labels[i] as usize;
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += (lse - z[y]) * scale;
                for r in 0..rows {
                    let p = (z[r] - lse).exp();
                    add(&mut grad, r, x, (p - f64::from(r == y)) * scale);
                }
            }
        }
        LossSpec::Corrected { e_tilde_plus, e_tilde_minus } => {
            for &i in batch {
                let x = ds.feature_row(i);
                let m = model.margin(x);
                let s = sign_of(labels[i]);
                let (e_same, e_opp) = if labels[i] == 1 {
                    (e_tilde_plus, e_tilde_minus)
                } else {
                    (e_tilde_minus, e_tilde_plus)
                };
                total += ((1.0 - e_opp) * logistic_loss(m, s)
                    - e_same * logistic_loss(m, -s))
                    * scale;
                let g = (1.0 - e_opp) * logistic_dmargin(m, s)
                    - e_same * logistic_dmargin(m, -s);
                add(&mut grad, 0, x, g * scale);
            }
        }
        LossSpec::Peer { alpha, peer_seed } => {
            let pairs = peer_pairs(ds.len(), batch.len(), peer_seed, step);
            for (&i, &(p1, p2)) in batch.iter().zip(&pairs) {
                let x = ds.feature_row(i);
                let xp = ds.feature_row(p1);
                if k == 2 {
                    let s = sign_of(labels[i]);
                    let sp = sign_of(labels[p2]);
                    let m = model.margin(x);
                    let mp = model.margin(xp);
                    total += (logistic_loss(m, s) - alpha * logistic_loss(mp, sp)) * scale;
                    add(&mut grad, 0, x, logistic_dmargin(m, s) * scale);
                    add(&mut grad, 0, xp, -alpha * logistic_dmargin(mp, sp) * scale);
                } else {
                    let z = model.logits(x);
                    let zp = model.logits(xp);
                    let (y, yp) = (labels[i] as usize, labels[p2] as usize);
                    let lse = |z: &[f64]| {
                        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
                    };
                    let (l, lp) = (lse(&z), lse(&zp));
                    total += ((l - z[y]) - alpha * (lp - zp[yp])) * scale;
                    for r in 0..rows {
                        let p = (z[r] - l).exp();
                        add(&mut grad, r, x, (p - f64::from(r == y)) * scale);
                        let pp = (zp[r] - lp).exp();
                        add(&mut grad, r, xp, -alpha * (pp - f64::from(r == yp)) * scale);
                    }
                }
            }
        }
    }

    if l2_penalty > 0.0 {
        for (g, &w) in grad.iter_mut().zip(model.weights()) {
            *g += l2_penalty * w;
            total += 0.5 * l2_penalty * w * w;
        }
    }
    Ok((total, grad))
}

/// Minimize the empirical risk of `loss` over `ds` by mini-batch SGD.
/// Deterministic in `cfg.seed`: shuffling, peer draws, and arithmetic order
/// are all fixed.
pub fn train(ds: &LabeledDataset, loss: &LossSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss.validate(ds.class_count())?;
    if ds.is_empty() {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    let mut model = LinearModel::zeros(ds.dim(), ds.class_count())?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, rng::TAG_SHUFFLE);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;
    let mut params = model.to_parameters();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (value, grad) = batch_objective(&model, ds, loss, batch, cfg.l2_penalty, step)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, step {step}"
                )));
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "model parameters at epoch {epoch}, step {step}"
                )));
            }
            model = LinearModel::from_parameters(ds.dim(), ds.class_count(), &params)?;
            epoch_loss += value;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Accuracy and a K×K confusion matrix (`counts[true · K + predicted]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    counts: Vec<u64>,
    class_count: usize,
}

impl Evaluation {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.class_count + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.class_count).map(|c| self.count(c, c)).sum();
        correct as f64 / self.total() as f64
    }
}

/// Score `model` on `ds` against noisy labels, or clean labels when
/// `use_clean`.
pub fn evaluate(model: &LinearModel, ds: &LabeledDataset, use_clean: bool) -> Result<Evaluation> {
    if model.dim() != ds.dim() || model.class_count() != ds.class_count() {
        return Err(Error::DimensionMismatch(format!(
            "model ({}d, {} classes) on data ({}d, {} classes)",
            model.dim(),
            model.class_count(),
            ds.dim(),
            ds.class_count()
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate on an empty dataset".into()));
    }
    let labels = if use_clean {
        ds.clean_labels().ok_or(Error::MissingCleanLabels)?
    } else {
        ds.noisy_labels()
    };
    let k = ds.class_count();
    let mut counts = vec![0u64; k * k];
    for (i, &y) in labels.iter().enumerate() {
        let pred = model.predict(ds.feature_row(i)) as usize;
        counts[y as usize * k + pred] += 1;
    }
    Ok(Evaluation { counts, class_count: k })
}

/// Count conditional flip frequencies against the clean labels, producing a
/// noise spec of the shape implied by the data: a transition matrix for
/// K > 2, group-symmetric rates for grouped binary data, and a class rate
/// pair otherwise.
pub fn estimate_rates_from_clean(ds: &LabeledDataset) -> Result<NoiseSpec> {
    let clean = ds.clean_labels().ok_or(Error::MissingCleanLabels)?;
    let noisy = ds.noisy_labels();
    let k = ds.class_count();
    if k > 2 {
        let mut counts = vec![0u64; k * k]; // [noisy][clean]
        let mut totals = vec![0u64; k];
        for (&c, &y) in clean.iter().zip(noisy) {
            counts[y as usize * k + c as usize] += 1;
            totals[c as usize] += 1;
        }
        let mut entries = vec![0.0; k * k];
        for c in 0..k {
            if totals[c] == 0 {
                return Err(Error::EmptyCell(format!("no samples of clean class {c}")));
            }
            for j in 0..k {
                entries[j * k + c] = counts[j * k + c] as f64 / totals[c] as f64;
            }
        }
        return Ok(NoiseSpec::Matrix(TransitionMatrix::new(k, entries)?));
    }
    if let Some(groups) = ds.groups() {
        if ds.group_count() == 2 {
            let mut flips = [0u64; 2];
            let mut totals = [0u64; 2];
            for ((&c, &y), &z) in clean.iter().zip(noisy).zip(groups) {
                totals[z as usize] += 1;
                flips[z as usize] += u64::from(c != y);
            }
            for (z, name) in [(0usize, "a"), (1, "b")] {
                if totals[z] == 0 {
                    return Err(Error::EmptyCell(format!("no samples in group {name}")));
                }
            }
            return Ok(NoiseSpec::GroupSymmetric {
                e_a: flips[0] as f64 / totals[0] as f64,
                e_b: flips[1] as f64 / totals[1] as f64,
            });
        }
    }
    let mut flips = [0u64; 2];
    let mut totals = [0u64; 2];
    for (&c, &y) in clean.iter().zip(noisy) {
        totals[c as usize] += 1;
        flips[c as usize] += u64::from(c != y);
    }
    for c in 0..2 {
        if totals[c] == 0 {
            return Err(Error::EmptyCell(format!("no samples of clean class {c}")));
        }
    }
    Ok(NoiseSpec::BinaryClass {
        e_minus: flips[0] as f64 / totals[0] as f64,
        e_plus: flips[1] as f64 / totals[1] as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_clusterable, inject_noise, SyntheticConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corrected_loss_matches_pinned_values() {
        assert_eq!(corrected_loss(0.7, 1.1, 1, 0.0, 0.0).unwrap(), 0.7);
        assert_eq!(corrected_loss(0.7, 1.1, -1, 0.0, 0.0).unwrap(), 1.1);
        let v = corrected_loss(0.2, 1.5, 1, 0.1, 0.3).unwrap();
        assert!((v - (-0.01)).abs() < 1e-15, "v = {v}");
        // observed −1: (1 − ẽ₊)·ℓ₋ − ẽ₋·ℓ₊
        let v = corrected_loss(0.2, 1.5, -1, 0.1, 0.3).unwrap();
        assert!((v - (0.9 * 1.5 - 0.3 * 0.2)).abs() < 1e-15);
        assert!(corrected_loss(0.2, 1.5, 0, 0.1, 0.3).is_err());
        assert!(corrected_loss(0.2, 1.5, 1, 0.5, 0.3).is_err());
    }

    fn random_model(dim: usize, k: usize, seed: u64) -> LinearModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = if k == 2 { 1 } else { k };
        let params: Vec<f64> = (0..rows * dim + rows)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        LinearModel::from_parameters(dim, k, &params).unwrap()
    }

    fn random_binary(n: usize, dim: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        LabeledDataset::new(feats, dim, labels, 2).unwrap()
    }

    #[test]
    fn peer_alpha_zero_is_cross_entropy() {
        let ds = random_binary(200, 4, 1);
        let model = random_model(4, 2, 2);
        let batch: Vec<usize> = (0..50).collect();
        let peer = peer_loss_batch(&model, &ds, &batch, 0.0, 7, 3).unwrap();
        let (ce, _) = batch_objective(&model, &ds, &LossSpec::CrossEntropy, &batch, 0.0, 3).unwrap();
        assert!((peer - ce).abs() < 1e-12);
    }

    #[test]
    fn peer_loss_is_deterministic_and_needs_two() {
        let ds = random_binary(100, 3, 4);
        let model = random_model(3, 2, 5);
        let batch: Vec<usize> = (0..20).collect();
        let a = peer_loss_batch(&model, &ds, &batch, 1.0, 11, 2).unwrap();
        let b = peer_loss_batch(&model, &ds, &batch, 1.0, 11, 2).unwrap();
        assert_eq!(a, b);
        let c = peer_loss_batch(&model, &ds, &batch, 1.0, 11, 3).unwrap();
        assert_ne!(a, c, "different steps should draw different peers");
        assert!(peer_loss_batch(&model, &ds, &batch[..1], 1.0, 11, 2).is_err());
    }

    #[test]
    fn peer_loss_single_class_expectation() {
        // all labels positive: the peer term's expectation equals the plain
        // CE mean, so E[peer] = (1 − α)·CE
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let feats: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ds = LabeledDataset::new(feats, 2, vec![1; n], 2).unwrap();
        let model = random_model(2, 2, 9);
        let batch: Vec<usize> = (0..n).collect();
        let alpha = 1.0;
        let peer = peer_loss_batch(&model, &ds, &batch, alpha, 13, 0).unwrap();
        let (ce, _) = batch_objective(&model, &ds, &LossSpec::CrossEntropy, &batch, 0.0, 0).unwrap();
        // 3σ of the peer-term mean, σ estimated from the per-sample losses
        let losses: Vec<f64> = (0..n)
            .map(|i| logistic_loss(model.margin(ds.feature_row(i)), 1.0))
            .collect();
        let mean = losses.iter().sum::<f64>() / n as f64;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64;
        let tol = 3.0 * alpha * (var / n as f64).sqrt();
        assert!(
            (peer - (1.0 - alpha) * ce).abs() <= tol,
            "peer = {peer}, (1−α)·CE = {}",
            (1.0 - alpha) * ce
        );
    }

    fn finite_difference_check(ds: &LabeledDataset, loss: &LossSpec, seed: u64) -> f64 {
        let k = ds.class_count();
        let batch: Vec<usize> = (0..40.min(ds.len())).collect();
        let l2 = 0.01;
        let mut worst: f64 = 0.0;
        for point in 0..10 {
            let model = random_model(ds.dim(), k, seed * 100 + point);
            let (_, grad) = batch_objective(&model, ds, loss, &batch, l2, 5).unwrap();
            let params = model.to_parameters();
            let h = 1e-5;
            for j in 0..params.len() {
                let mut plus = params.clone();
                plus[j] += h;
                let mut minus = params.clone();
                minus[j] -= h;
                let mp = LinearModel::from_parameters(ds.dim(), k, &plus).unwrap();
                let mm = LinearModel::from_parameters(ds.dim(), k, &minus).unwrap();
                let (lp, _) = batch_objective(&mp, ds, loss, &batch, l2, 5).unwrap();
                let (lm, _) = batch_objective(&mm, ds, loss, &batch, l2, 5).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = grad[j].abs().max(fd.abs()).max(1e-8);
                worst = worst.max((grad[j] - fd).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ds = random_binary(200, 5, 21);
        for loss in [
            LossSpec::CrossEntropy,
            LossSpec::Corrected { e_tilde_plus: 0.1, e_tilde_minus: 0.3 },
            LossSpec::Peer { alpha: 1.0, peer_seed: 17 },
        ] {
            let worst = finite_difference_check(&ds, &loss, 31);
            assert!(worst <= 1e-4, "{loss:?}: relative error {worst}");
        }
        // multi-class softmax path
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let feats: Vec<f64> = (0..150 * 4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<u32> = (0..150).map(|_| rng.gen_range(0..3)).collect();
        let multi = LabeledDataset::new(feats, 4, labels, 3).unwrap();
        for loss in [LossSpec::CrossEntropy, LossSpec::Peer { alpha: 0.5, peer_seed: 3 }] {
            let worst = finite_difference_check(&multi, &loss, 41);
            assert!(worst <= 1e-4, "{loss:?}: relative error {worst}");
        }
    }

    #[test]
    fn training_separates_clean_blobs() {
        let mut cfg = SyntheticConfig::new(2000, 2, 2, 71);
        cfg.cluster_spread = 0.05;
        let ds = generate_clusterable(&cfg).unwrap();
        let out = train(&ds, &LossSpec::CrossEntropy, &TrainConfig::default()).unwrap();
        let acc = evaluate(&out.model, &ds, true).unwrap().accuracy();
        assert!(acc >= 0.99, "training accuracy {acc}");
        assert_eq!(out.epoch_losses.len(), TrainConfig::default().epochs);
    }

    #[test]
    fn symmetric_noise_hardly_moves_the_minimizer() {
        let mut cfg = SyntheticConfig::new(20_000, 3, 4, 73);
        cfg.cluster_spread = 0.05;
        let clean = generate_clusterable(&cfg).unwrap();
        let noisy = inject_noise(
            &clean,
            &crate::data::NoiseSpec::BinaryClass { e_minus: 0.2, e_plus: 0.2 },
            5,
        )
        .unwrap();
        let cfg = TrainConfig::default();
        let acc_clean = evaluate(
            &train(&clean, &LossSpec::CrossEntropy, &cfg).unwrap().model,
            &clean,
            true,
        )
        .unwrap()
        .accuracy();
        let acc_noisy = evaluate(
            &train(&noisy, &LossSpec::CrossEntropy, &cfg).unwrap().model,
            &noisy,
            true,
        )
        .unwrap()
        .accuracy();
        assert!(acc_noisy >= 0.95, "clean-label accuracy {acc_noisy}");
        assert!(acc_clean - acc_noisy <= 0.02, "degradation {}", acc_clean - acc_noisy);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = random_binary(500, 4, 81);
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let loss = LossSpec::Peer { alpha: 1.0, peer_seed: 3 };
        let a = train(&ds, &loss, &cfg).unwrap();
        let b = train(&ds, &loss, &cfg).unwrap();
        assert_eq!(a.model.to_parameters(), b.model.to_parameters());
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn divergence_is_reported_not_propagated() {
        let feats = vec![1e200, -1e200, 1e200, -1e200];
        let ds = LabeledDataset::new(feats, 1, vec![1, 0, 1, 0], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 1e200,
            l2_penalty: 0.0,
            seed: 1,
        };
        assert!(matches!(
            train(&ds, &LossSpec::CrossEntropy, &cfg),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn evaluation_counts_and_degenerate_models() {
        let ds = random_binary(1000, 2, 91);
        let constant = LinearModel::from_parameters(2, 2, &[0.0, 0.0, 5.0]).unwrap();
        let eval = evaluate(&constant, &ds, false).unwrap();
        let positives = ds.noisy_labels().iter().filter(|&&y| y == 1).count() as f64;
        assert!((eval.accuracy() - positives / 1000.0).abs() < 1e-12);
        assert_eq!(eval.count(0, 1) + eval.count(1, 1), 1000);
        assert!(evaluate(&constant, &ds, true).is_err(), "no clean labels");
    }

    #[test]
    fn noisy_accuracy_follows_the_symmetric_identity() {
        let mut cfg = SyntheticConfig::new(50_000, 3, 4, 93);
        cfg.cluster_spread = 0.05;
        let clean = generate_clusterable(&cfg).unwrap();
        let e = 0.2;
        let noisy = inject_noise(
            &clean,
            &crate::data::NoiseSpec::BinaryClass { e_minus: e, e_plus: e },
            15,
        )
        .unwrap();
        let model = random_model(3, 2, 95);
        let acc_clean = evaluate(&model, &noisy, true).unwrap().accuracy();
        let acc_noisy = evaluate(&model, &noisy, false).unwrap().accuracy();
        let predicted = (1.0 - 2.0 * e) * acc_clean + e;
        assert!(
            (acc_noisy - predicted).abs() <= 0.01,
            "noisy {acc_noisy} vs predicted {predicted}"
        );
    }

    #[test]
    fn rate_estimation_recovers_injected_rates() {
        let mut cfg = SyntheticConfig::new(100_000, 2, 4, 97);
        cfg.cluster_spread = 0.05;
        let clean = generate_clusterable(&cfg).unwrap();
        match estimate_rates_from_clean(&clean).unwrap() {
            NoiseSpec::BinaryClass { e_minus, e_plus } => {
                assert_eq!((e_minus, e_plus), (0.0, 0.0));
            }
            other => panic!("expected binary rates, got {other:?}"),
        }
        let noisy = inject_noise(
            &clean,
            &crate::data::NoiseSpec::BinaryClass { e_minus: 0.3, e_plus: 0.1 },
            25,
        )
        .unwrap();
        match estimate_rates_from_clean(&noisy).unwrap() {
            NoiseSpec::BinaryClass { e_minus, e_plus } => {
                assert!((e_minus - 0.3).abs() < 0.01);
                assert!((e_plus - 0.1).abs() < 0.01);
            }
            other => panic!("expected binary rates, got {other:?}"),
        }
    }

    #[test]
    fn rate_estimation_recovers_matrices_and_groups() {
        let mut cfg = SyntheticConfig::new(100_000, 2, 8, 99);
        cfg.cluster_spread = 0.05;
        cfg.class_count = 4;
        let clean = generate_clusterable(&cfg).unwrap();
        let spec = crate::data::generate_noise_matrix(4, 0.2, 7).unwrap();
        let noisy = inject_noise(&clean, &spec, 27).unwrap();
        let crate::data::NoiseSpec::Matrix(truth) = &spec else {
            panic!()
        };
        match estimate_rates_from_clean(&noisy).unwrap() {
            NoiseSpec::Matrix(t) => {
                for j in 0..4 {
                    for i in 0..4 {
                        assert!(
                            (t.entry(j, i) - truth.entry(j, i)).abs() < 0.02,
                            "entry ({j},{i})"
                        );
                    }
                }
            }
            other => panic!("expected a matrix, got {other:?}"),
        }

        let mut cfg = SyntheticConfig::new(100_000, 2, 4, 101);
        cfg.cluster_spread = 0.05;
        let base = generate_clusterable(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let groups: Vec<u32> = (0..base.len()).map(|_| rng.gen_range(0..2)).collect();
        let grouped = base.with_groups(groups, 2).unwrap();
        let noisy = inject_noise(
            &grouped,
            &crate::data::NoiseSpec::GroupSymmetric { e_a: 0.1, e_b: 0.3 },
            29,
        )
        .unwrap();
        match estimate_rates_from_clean(&noisy).unwrap() {
            NoiseSpec::GroupSymmetric { e_a, e_b } => {
                assert!((e_a - 0.1).abs() < 0.01);
                assert!((e_b - 0.3).abs() < 0.01);
            }
            other => panic!("expected group rates, got {other:?}"),
        }
    }

    #[test]
    fn model_io_round_trips_exactly() {
        let model = random_model(7, 2, 111);
        let path = std::env::temp_dir().join(format!("labelnoise-model-{}", std::process::id()));
        model.save(&path).unwrap();
        let back = LinearModel::load(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(model, back);

        let multi = random_model(3, 4, 113);
        let path = std::env::temp_dir().join(format!("labelnoise-model4-{}", std::process::id()));
        multi.save(&path).unwrap();
        let back = LinearModel::load(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(multi, back);
    }

    #[test]
    fn model_load_rejects_garbage() {
        let path = std::env::temp_dir().join(format!("labelnoise-badmodel-{}", std::process::id()));
        std::fs::write(&path, "dim = 2\nclasses = 2\nbias = 0.1\nweights = 1 oops\n").unwrap();
        let err = LinearModel::load(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
