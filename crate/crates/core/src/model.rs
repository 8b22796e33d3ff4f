//! Fairness-unaware baseline: binary logistic regression trained by full-batch
//! gradient descent, with optional per-row weights.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{bail, Result};
use crate::metrics::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// Coefficient on the squared norm of the non-intercept parameters.
    pub l2_penalty: f64,
    /// Descent starts from θ = 0 and never consumes randomness; the seed is carried
    /// so that callers can derive sub-seeds from one options value.
    pub seed: u64,
    /// Feed the sensitive attribute to the classifier as an extra feature.
    pub use_sensitive: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 0.1,
            max_epochs: 5000,
            tolerance: 1e-6,
            l2_penalty: 1e-4,
            seed: 0,
            use_sensitive: false,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            bail!(Parameter, "learning rate must be positive");
        }
        if self.max_epochs == 0 {
            bail!(Parameter, "max_epochs must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            bail!(Parameter, "tolerance must be positive");
        }
        if !(self.l2_penalty >= 0.0) {
            bail!(Parameter, "l2 penalty must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxEpochs,
    /// Step size underflowed before the gradient tolerance was met.
    Stalled,
    /// Only one class present; an intercept-only model was returned.
    DegenerateLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// Coefficients in `feature_names` order, followed by the intercept.
    pub theta: Vec<f64>,
    pub training_loss: f64,
    pub feature_names: Vec<String>,
    /// Whether the last entry of `feature_names` is the sensitive attribute.
    pub uses_sensitive: bool,
    pub status: FitStatus,
    pub epochs: usize,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// `(softplus(z), sigmoid(z))` from a single exponential.
fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let e = libm::exp(-libm::fabs(z));
    let sp = z.max(0.0) + libm::log1p(e);
    let sg = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, sg)
}

/// Design matrix with a trailing intercept column, normalized weights and the
/// regularized weighted negative log-likelihood over it.
pub(crate) struct LogisticObjective {
    x: Vec<f64>,
    pub(crate) n: usize,
    pub(crate) p: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    l2: f64,
}

impl LogisticObjective {
    pub(crate) fn new(data: &Dataset, weights: Option<&[f64]>, use_sensitive: bool, l2: f64) -> Result<Self> {
        let n = data.n_rows();
        let p = data.n_features() + usize::from(use_sensitive) + 1;
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.extend_from_slice(data.row(i));
            if use_sensitive {
                x.push(f64::from(data.sensitive()[i]));
            }
            x.push(1.0);
        }
        if x.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "non-finite feature value");
        }
        let w = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    bail!(Parameter, "{} weights for {} rows", w.len(), n);
                }
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    bail!(Parameter, "weights must be finite and nonnegative");
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    bail!(Parameter, "weights must have a positive sum");
                }
                w.iter().map(|v| v / total).collect()
            }
        };
        let y = data.label().iter().map(|&v| f64::from(v)).collect();
        Ok(LogisticObjective { x, n, p, y, w, l2 })
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn score(&self, theta: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        self.l2 * theta[..self.p - 1].iter().map(|t| t * t).sum::<f64>()
    }

    pub(crate) fn loss(&self, theta: &[f64]) -> f64 {
        let nll: f64 = (0..self.n)
            .map(|i| {
                let z = self.score(theta, i);
                self.w[i] * (softplus(z) - self.y[i] * z)
            })
            .sum();
        nll + self.penalty(theta)
    }

    pub(crate) fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.p];
        let mut nll = 0.0;
        for i in 0..self.n {
            let z = self.score(theta, i);
            let (sp, sg) = softplus_sigmoid(z);
            nll += self.w[i] * (sp - self.y[i] * z);
            let r = self.w[i] * (sg - self.y[i]);
            for (g, xv) in grad.iter_mut().zip(self.row(i)) {
                *g += r * xv;
            }
        }
        for (g, t) in grad[..self.p - 1].iter_mut().zip(theta) {
            *g += 2.0 * self.l2 * t;
        }
        (nll + self.penalty(theta), grad)
    }

    pub(crate) fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let mut h = DMatrix::<f64>::zeros(p, p);
        for i in 0..self.n {
            let s = sigmoid(self.score(theta, i));
            let c = self.w[i] * s * (1.0 - s);
            let row = self.row(i);
            for a in 0..p {
                let ca = c * row[a];
                for b in a..p {
                    h[(a, b)] += ca * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        for a in 0..p - 1 {
            h[(a, a)] += 2.0 * self.l2;
        }
        h
    }

    /// Weighted share of positive labels.
    fn positive_mass(&self) -> f64 {
        self.w.iter().zip(&self.y).map(|(w, y)| w * y).sum()
    }
}

pub(crate) fn model_feature_names(data: &Dataset, use_sensitive: bool) -> Vec<String> {
    let mut names = data.feature_names().to_vec();
    if use_sensitive {
        names.push(data.sensitive_attribute().name.clone());
    }
    names
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Minimizes the (weighted) regularized negative log-likelihood by full-batch gradient
/// descent. The step halves whenever it would increase the loss and grows by 10%
/// after each accepted step, up to 1000 times the configured learning rate.
pub fn fit_logistic(train: &Dataset, weights: Option<&[f64]>, opts: &TrainOptions) -> Result<TrainedModel> {
    opts.validate()?;
    let objective = LogisticObjective::new(train, weights, opts.use_sensitive, opts.l2_penalty)?;
    let feature_names = model_feature_names(train, opts.use_sensitive);
    let p = objective.p;

    let rate = objective.positive_mass();
    if rate <= 0.0 || rate >= 1.0 {
        log::warn!("all training labels are {}; fitting an intercept-only model", u8::from(rate >= 1.0));
        let clipped = rate.clamp(1e-9, 1.0 - 1e-9);
        let mut theta = vec![0.0; p];
        theta[p - 1] = libm::log(clipped / (1.0 - clipped));
        return Ok(TrainedModel {
            training_loss: objective.loss(&theta),
            theta,
            feature_names,
            uses_sensitive: opts.use_sensitive,
            status: FitStatus::DegenerateLabels,
            epochs: 0,
        });
    }

    let (theta, loss, status, epochs) = gradient_descent(&objective, vec![0.0; p], opts);
    Ok(TrainedModel {
        theta,
        training_loss: loss,
        feature_names,
        uses_sensitive: opts.use_sensitive,
        status,
        epochs,
    })
}

/// Step multiplier after an accepted step.
const STEP_GROWTH: f64 = 1.1;
const MAX_STEP_FACTOR: f64 = 1e3;

pub(crate) fn gradient_descent(
    objective: &LogisticObjective,
    mut theta: Vec<f64>,
    opts: &TrainOptions,
) -> (Vec<f64>, f64, FitStatus, usize) {
    let (mut loss, mut grad) = objective.loss_grad(&theta);
    let mut lr = opts.learning_rate;
    let mut candidate = vec![0.0; theta.len()];
    for epoch in 0..opts.max_epochs {
        if norm(&grad) < opts.tolerance {
            return (theta, loss, FitStatus::Converged, epoch);
        }
        loop {
            for ((c, t), g) in candidate.iter_mut().zip(&theta).zip(&grad) {
                *c = t - lr * g;
            }
            let (cand_loss, cand_grad) = objective.loss_grad(&candidate);
            if cand_loss <= loss {
                core::mem::swap(&mut theta, &mut candidate);
                loss = cand_loss;
                grad = cand_grad;
                lr = (lr * STEP_GROWTH).min(opts.learning_rate * MAX_STEP_FACTOR);
                break;
            }
            lr *= 0.5;
            if lr < 1e-14 {
                return (theta, loss, FitStatus::Stalled, epoch);
            }
        }
    }
    (theta, loss, FitStatus::MaxEpochs, opts.max_epochs)
}

impl TrainedModel {
    fn check_arity(&self, data: &Dataset) -> Result<()> {
        let expected = model_feature_names(data, self.uses_sensitive);
        if expected != self.feature_names {
            bail!(
                Schema,
                "model expects features [{}], data provides [{}]",
                self.feature_names.join(","),
                expected.join(",")
            );
        }
        Ok(())
    }

    pub fn intercept(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.theta[..self.theta.len() - 1]
    }

    /// Model score for one encoded row plus its sensitive value.
    pub fn score_row(&self, row: &[f64], sensitive: u8) -> f64 {
        let coef = self.coefficients();
        let mut z = self.intercept() + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        if self.uses_sensitive {
            z += coef[coef.len() - 1] * f64::from(sensitive);
        }
        z
    }
}

/// Signed linear score `θ·x` (not normalized by ‖θ‖).
pub fn decision_distance(model: &TrainedModel, data: &Dataset) -> Result<Vec<f64>> {
    model.check_arity(data)?;
    Ok((0..data.n_rows()).map(|i| model.score_row(data.row(i), data.sensitive()[i])).collect())
}

/// `Pr(Ŷ = 1 | X)` per row.
pub fn predict_proba(model: &TrainedModel, data: &Dataset) -> Result<Vec<f64>> {
    Ok(decision_distance(model, data)?.into_iter().map(sigmoid).collect())
}

/// Label 1 iff the probability is at least `threshold`.
pub fn predict_label(model: &TrainedModel, data: &Dataset, threshold: f64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!(Parameter, "threshold {threshold} outside [0, 1]");
    }
    if threshold == 0.5 {
        // sigmoid(z) >= 0.5 exactly when z >= 0; avoids rounding at the boundary
        return Ok(decision_distance(model, data)?.into_iter().map(|d| u8::from(d >= 0.0)).collect());
    }
    Ok(predict_proba(model, data)?.into_iter().map(|p| u8::from(p >= threshold)).collect())
}

impl Classifier for TrainedModel {
    fn predict(&self, data: &Dataset) -> Result<Vec<u8>> {
        predict_label(self, data, 0.5)
    }
}

impl core::fmt::Display for TrainedModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for (name, c) in self.feature_names.iter().zip(self.coefficients()) {
            writeln!(f, "{name}\t{c}")?;
        }
        write!(f, "(intercept)\t{}", self.intercept())
    }
}
