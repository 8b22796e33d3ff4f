//! Covariance-constrained logistic regression for demographic parity.
//!
//! The decision-boundary covariance `cov = (1/n) Σ (S_t − S̄) d_θ(X_t)` is linear in
//! θ, so both variants are smooth convex problems. The fairness-constrained variant
//! uses a quadratic penalty homotopy: μ starts at 1 and grows tenfold for up to 8
//! stages, each warm-started from the previous one and solved by damped Newton. The
//! accuracy-constrained variant walks the exact trade-off curve
//! `θ_λ = argmin L(θ) + λ·cov(θ)`, bisecting on λ until the loss bound binds or the
//! covariance reaches zero.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{bail, Result};
use crate::model::{fit_logistic, FitStatus, LogisticObjective, TrainOptions, TrainedModel};
use crate::optim::{newton, Smooth};

pub const DEFAULT_COVARIANCE_BOUND: f64 = 0.0;
pub const DEFAULT_ACCURACY_SLACK: f64 = 0.05;

const MU_START: f64 = 1.0;
const MU_GROWTH: f64 = 10.0;
const STAGES: usize = 8;
const COV_TOLERANCE: f64 = 1e-3;
const LOSS_TOLERANCE: f64 = 1e-4;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_DOUBLINGS: usize = 60;
const BISECTIONS: usize = 100;
const NEWTON_ITERS: usize = 200;
const GRAD_TOL: f64 = 1e-10;

/// `(1/n) Σ (s_t − s̄) d_t`.
pub fn covariance_proxy(s: &[u8], distances: &[f64]) -> Result<f64> {
    if s.is_empty() || s.len() != distances.len() {
        bail!(Input, "covariance needs equal nonempty columns ({} vs {})", s.len(), distances.len());
    }
    let n = s.len() as f64;
    let mean_s = s.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    Ok(s.iter().zip(distances).map(|(&si, d)| (f64::from(si) - mean_s) * d).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConstraintTarget {
    /// Minimize loss subject to `|cov| ≤ bound_c`.
    Covariance { bound_c: f64 },
    /// Minimize `|cov|` subject to `L(θ) ≤ (1 + gamma) L*`.
    AccuracySlack { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceConstraint {
    pub target: ConstraintTarget,
    pub mean_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStage {
    pub mu: f64,
    pub loss: f64,
    pub cov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZafarFit {
    pub model: TrainedModel,
    pub constraint: CovarianceConstraint,
    pub achieved_cov: f64,
    pub loss: f64,
    /// Loss of the unconstrained fit.
    pub reference_loss: f64,
    pub converged: bool,
    pub stages: Vec<PenaltyStage>,
}

/// Logistic loss plus the linear covariance map `θ ↦ a·θ`.
struct Problem {
    logistic: LogisticObjective,
    a: Vec<f64>,
    mean_s: f64,
}

impl Problem {
    fn new(train: &Dataset, opts: &TrainOptions) -> Result<Problem> {
        let s = train.sensitive();
        let privileged = s.iter().filter(|&&v| v == 1).count();
        if privileged == 0 || privileged == s.len() {
            bail!(Input, "both sensitive groups must be present in the training data");
        }
        let logistic = LogisticObjective::new(train, None, false, opts.l2_penalty)?;
        let n = logistic.n as f64;
        let mean_s = privileged as f64 / n;
        let mut a = vec![0.0; logistic.p];
        for (i, &si) in s.iter().enumerate() {
            let c = f64::from(si) - mean_s;
            for (aj, x) in a.iter_mut().zip(logistic.row(i)) {
                *aj += c * x;
            }
        }
        for aj in &mut a {
            *aj /= n;
        }
        Ok(Problem { logistic, a, mean_s })
    }

    fn cov(&self, theta: &[f64]) -> f64 {
        self.a.iter().zip(theta).map(|(a, t)| a * t).sum()
    }
}

/// `L(θ) + μ·max(0, |cov| − c)²`.
struct FairPenalty<'a> {
    problem: &'a Problem,
    bound: f64,
    mu: f64,
}

impl Smooth for FairPenalty<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let excess = (self.problem.cov(x).abs() - self.bound).max(0.0);
        self.problem.logistic.loss(x) + self.mu * excess * excess
    }

    fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (loss, mut grad) = self.problem.logistic.loss_grad(x);
        let mut hess = self.problem.logistic.hessian(x);
        let cov = self.problem.cov(x);
        let excess = (cov.abs() - self.bound).max(0.0);
        if excess > 0.0 {
            let sign = cov.signum();
            let a = &self.problem.a;
            for (g, aj) in grad.iter_mut().zip(a) {
                *g += 2.0 * self.mu * excess * sign * aj;
            }
            for i in 0..a.len() {
                for j in 0..a.len() {
                    hess[(i, j)] += 2.0 * self.mu * a[i] * a[j];
                }
            }
        }
        (loss + self.mu * excess * excess, grad, hess)
    }
}

/// `L(θ) + λ·cov(θ)`.
struct Tilted<'a> {
    problem: &'a Problem,
    lambda: f64,
}

impl Smooth for Tilted<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.problem.logistic.loss(x) + self.lambda * self.problem.cov(x)
    }

    fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (loss, mut grad) = self.problem.logistic.loss_grad(x);
        for (g, aj) in grad.iter_mut().zip(&self.problem.a) {
            *g += self.lambda * aj;
        }
        (loss + self.lambda * self.problem.cov(x), grad, self.problem.logistic.hessian(x))
    }
}

fn finish(
    problem: &Problem,
    base: &TrainedModel,
    theta: Vec<f64>,
    target: ConstraintTarget,
    converged: bool,
    stages: Vec<PenaltyStage>,
) -> ZafarFit {
    let loss = problem.logistic.loss(&theta);
    let achieved_cov = problem.cov(&theta);
    if !converged {
        log::warn!("covariance-constrained fit did not meet its target after {} stages; returning best iterate", stages.len());
    }
    ZafarFit {
        model: TrainedModel {
            theta,
            training_loss: loss,
            feature_names: base.feature_names.clone(),
            uses_sensitive: false,
            status: if converged { FitStatus::Converged } else { FitStatus::MaxEpochs },
            epochs: stages.len(),
        },
        constraint: CovarianceConstraint { target, mean_s: problem.mean_s },
        achieved_cov,
        loss,
        reference_loss: base.training_loss,
        converged,
        stages,
    }
}

fn solve_stage<F: Smooth>(stage: &F, theta: Vec<f64>, mu: f64) -> Vec<f64> {
    let result = newton(stage, theta, GRAD_TOL, NEWTON_ITERS);
    if !result.converged {
        log::debug!("penalty stage mu={mu:e} stopped before its gradient tolerance");
    }
    result.x
}

fn unconstrained(train: &Dataset, opts: &TrainOptions) -> Result<(Problem, TrainedModel)> {
    let opts = TrainOptions { use_sensitive: false, ..opts.clone() };
    let problem = Problem::new(train, &opts)?;
    let base = fit_logistic(train, None, &opts)?;
    Ok((problem, base))
}

/// Maximizes accuracy subject to `|cov| ≤ c`.
///
/// The sensitive attribute is never used as a model feature.
pub fn fit_zafar_di_fair(train: &Dataset, c: f64, opts: &TrainOptions) -> Result<ZafarFit> {
    if !(c >= 0.0) {
        bail!(Parameter, "covariance bound must be nonnegative");
    }
    let (problem, base) = unconstrained(train, opts)?;
    let target = ConstraintTarget::Covariance { bound_c: c };
    let mut theta = base.theta.clone();
    let mut stages = Vec::new();
    if problem.cov(&theta).abs() <= c {
        return Ok(finish(&problem, &base, theta, target, true, stages));
    }
    let mut mu = MU_START;
    let mut converged = false;
    for _ in 0..STAGES {
        let stage = FairPenalty { problem: &problem, bound: c, mu };
        theta = solve_stage(&stage, theta, mu);
        let cov = problem.cov(&theta);
        stages.push(PenaltyStage { mu, loss: problem.logistic.loss(&theta), cov });
        log::debug!("fair stage mu={mu:e} cov={cov:.3e}");
        if cov.abs() <= c + COV_TOLERANCE {
            converged = true;
            break;
        }
        mu *= MU_GROWTH;
    }
    Ok(finish(&problem, &base, theta, target, converged, stages))
}

/// Minimizes `|cov|` subject to `L(θ) ≤ (1 + γ) L*`, where `L*` is the loss of the
/// unconstrained fit.
///
/// Each [`PenaltyStage`] records one point `θ_λ` visited by the bisection, with λ in
/// the `mu` field.
pub fn fit_zafar_di_acc(train: &Dataset, gamma: f64, opts: &TrainOptions) -> Result<ZafarFit> {
    if !(gamma >= 0.0) {
        bail!(Parameter, "accuracy slack must be nonnegative");
    }
    let (problem, base) = unconstrained(train, opts)?;
    let target = ConstraintTarget::AccuracySlack { gamma };
    let threshold = (1.0 + gamma) * base.training_loss;
    let mut stages = Vec::new();
    let mut solve = |lambda: f64, start: &[f64]| {
        let signed = Tilted { problem: &problem, lambda };
        let theta = solve_stage(&signed, start.to_vec(), lambda);
        let (loss, cov) = (problem.logistic.loss(&theta), problem.cov(&theta));
        stages.push(PenaltyStage { mu: lambda, loss, cov });
        (theta, loss, cov)
    };

    let (theta0, loss0, cov0) = solve(0.0, &base.theta);
    if cov0 == 0.0 || loss0 > threshold {
        let converged = loss0 <= threshold * (1.0 + LOSS_TOLERANCE);
        return Ok(finish(&problem, &base, theta0, target, converged, stages));
    }
    // λ has the sign of cov0; θ_λ is acceptable while the loss bound holds and the
    // covariance has not crossed zero.
    let sign = cov0.signum();
    let acceptable = |loss: f64, cov: f64| loss <= threshold && sign * cov >= 0.0;

    let (mut lo, mut lo_theta) = (0.0, theta0);
    let mut hi = LAMBDA_START;
    let mut bracketed = false;
    for _ in 0..LAMBDA_DOUBLINGS {
        let (theta, loss, cov) = solve(sign * hi, &lo_theta);
        if !acceptable(loss, cov) {
            bracketed = true;
            break;
        }
        (lo, lo_theta) = (hi, theta);
        hi *= 2.0;
    }
    if bracketed {
        for _ in 0..BISECTIONS {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (theta, loss, cov) = solve(sign * mid, &lo_theta);
            if acceptable(loss, cov) {
                (lo, lo_theta) = (mid, theta);
            } else {
                hi = mid;
            }
        }
    }
    log::debug!("acc variant lambda={:e} after {} solves", sign * lo, stages.len());
    Ok(finish(&problem, &base, lo_theta, target, bracketed, stages))
}
