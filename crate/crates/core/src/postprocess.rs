//! Post-processing: reject-option classification, the equalized-odds mixing
//! predictor and calibrated equal-opportunity mixing.
//!
//! Randomized appliers draw one counter-based uniform per row keyed by
//! `(seed, row key)`, so results do not depend on row order or sharding.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::metrics::{disparate_impact, normalize_fairness, rate_balances, Group, RawFairness};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub confidence_threshold: f64,
}

impl CriticalRegion {
    pub fn new(confidence_threshold: f64) -> Result<Self> {
        if !(confidence_threshold > 0.5 && confidence_threshold <= 1.0) {
            bail!(Parameter, "critical-region threshold must lie in (0.5, 1], got {confidence_threshold}");
        }
        Ok(CriticalRegion { confidence_threshold })
    }

    pub fn contains(&self, p: f64) -> bool {
        p.max(1.0 - p) < self.confidence_threshold
    }
}

fn check_columns(probabilities: &[f64], s: &[u8]) -> Result<()> {
    if probabilities.len() != s.len() {
        bail!(Input, "{} probabilities for {} rows", probabilities.len(), s.len());
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!(Input, "probabilities must lie in [0, 1]");
    }
    Ok(())
}

/// Inside the critical region unprivileged rows get 1 and privileged rows 0; other
/// rows keep the 0.5-threshold label.
pub fn reject_option_apply(probabilities: &[f64], s: &[u8], region: &CriticalRegion) -> Result<Vec<u8>> {
    CriticalRegion::new(region.confidence_threshold)?;
    check_columns(probabilities, s)?;
    Ok(probabilities
        .iter()
        .zip(s)
        .map(|(&p, &si)| if region.contains(p) { 1 - si } else { u8::from(p >= 0.5) })
        .collect())
}

pub const DEFAULT_ROC_GRID: [f64; 9] = [0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessTarget {
    #[default]
    DiStar,
    Tprb,
    Tnrb,
}

/// Normalized score of `target` for the given predictions; undefined scores rank lowest.
pub fn target_score(target: FairnessTarget, s: &[u8], labels: &[u8], predictions: &[u8]) -> Result<f64> {
    let raw = match target {
        FairnessTarget::DiStar => RawFairness { di: disparate_impact(s, predictions)?, ..Default::default() },
        FairnessTarget::Tprb | FairnessTarget::Tnrb => {
            let rb = rate_balances(s, labels, predictions)?;
            RawFairness { tprb: rb.tprb, tnrb: rb.tnrb, ..Default::default() }
        }
    };
    let (n, _) = normalize_fairness(&raw);
    let score = match target {
        FairnessTarget::DiStar => n.di_star,
        FairnessTarget::Tprb => n.tprb,
        FairnessTarget::Tnrb => n.tnrb,
    };
    Ok(score.unwrap_or(f64::NEG_INFINITY))
}

/// Picks the grid threshold with the best normalized target score, preferring the
/// smaller threshold on ties.
pub fn reject_option_tune(
    probabilities: &[f64],
    s: &[u8],
    labels: &[u8],
    target: FairnessTarget,
    grid: &[f64],
) -> Result<CriticalRegion> {
    if grid.is_empty() {
        bail!(Parameter, "threshold grid is empty");
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, CriticalRegion)> = None;
    for &t in &sorted {
        let region = CriticalRegion::new(t)?;
        let preds = reject_option_apply(probabilities, s, &region)?;
        let score = target_score(target, s, labels, &preds)?;
        log::trace!("reject option threshold {t}: score {score}");
        if best.is_none_or(|(b, _)| score > b + 1e-12) {
            best = Some((score, region));
        }
    }
    Ok(best.map(|(_, r)| r).expect("grid is nonempty"))
}

/// Empirical statistics of `(S, Y, Ŷ)` needed by the mixing LP.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CellStats {
    /// `Pr(S = s, Y = y)`.
    joint: [[f64; 2]; 2],
    /// `Pr(Ŷ = 1 | S = s, Y = y)`.
    rate: [[f64; 2]; 2],
}

impl CellStats {
    fn new(labels: &[u8], predictions: &[u8], s: &[u8]) -> Result<Self> {
        if labels.len() != predictions.len() || labels.len() != s.len() || labels.is_empty() {
            bail!(Input, "labels, predictions and sensitive columns must have equal nonzero length");
        }
        let mut count = [[0usize; 2]; 2];
        let mut positive = [[0usize; 2]; 2];
        for ((&y, &p), &si) in labels.iter().zip(predictions).zip(s) {
            if y > 1 || p > 1 || si > 1 {
                bail!(Input, "columns must be 0/1");
            }
            count[si as usize][y as usize] += 1;
            positive[si as usize][y as usize] += p as usize;
        }
        let n = labels.len() as f64;
        let mut joint = [[0.0; 2]; 2];
        let mut rate = [[0.0; 2]; 2];
        for si in 0..2 {
            for y in 0..2 {
                if count[si][y] == 0 {
                    bail!(Fit, "no training rows with S={si}, Y={y}");
                }
                joint[si][y] = count[si][y] as f64 / n;
                rate[si][y] = positive[si][y] as f64 / count[si][y] as f64;
            }
        }
        Ok(CellStats { joint, rate })
    }
}

/// Randomized map `(Ŷ, S) → Ỹ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingPolicy {
    /// `Pr(Ỹ = 1 | Ŷ = ŷ, S = s)` indexed `[ŷ][s]`.
    pub p: [[f64; 2]; 2],
    /// Expected 0-1 loss of the mixed predictor on the fitting data.
    pub objective_loss: f64,
}

impl MixingPolicy {
    pub const IDENTITY: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 1.0]];

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            bail!(Parameter, "mixing probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

// Variables ordered p[0][0], p[0][1], p[1][0], p[1][1].
fn var(yhat: usize, s: usize) -> usize {
    yhat * 2 + s
}

/// Equality rows: for each y, `Pr(Ỹ=1 | S=1, Y=y) − Pr(Ỹ=1 | S=0, Y=y) = 0`.
fn equality_rows(stats: &CellStats) -> [[f64; 4]; 2] {
    let mut rows = [[0.0; 4]; 2];
    for (y, row) in rows.iter_mut().enumerate() {
        for s in 0..2 {
            let sign = if s == 1 { 1.0 } else { -1.0 };
            row[var(1, s)] += sign * stats.rate[s][y];
            row[var(0, s)] += sign * (1.0 - stats.rate[s][y]);
        }
    }
    rows
}

/// Linear 0-1 loss `c·p + c0`.
fn loss_coefficients(stats: &CellStats) -> ([f64; 4], f64) {
    let mut c = [0.0; 4];
    let mut c0 = 0.0;
    for s in 0..2 {
        for y in 0..2 {
            // Loss for (s, y) is Pr(Ỹ = 1 − y), with Pr(Ỹ=1) = p1·r + p0·(1−r).
            let w = stats.joint[s][y];
            let sign = if y == 1 { -1.0 } else { 1.0 };
            if y == 1 {
                c0 += w;
            }
            c[var(1, s)] += sign * w * stats.rate[s][y];
            c[var(0, s)] += sign * w * (1.0 - stats.rate[s][y]);
        }
    }
    (c, c0)
}

fn evaluate(c: &[f64; 4], c0: f64, p: &[f64; 4]) -> f64 {
    c0 + c.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
}

const FEASIBILITY: f64 = 1e-12;

/// Solves the free variables of a candidate vertex; `None` if the restricted system
/// is singular or inconsistent.
fn complete_vertex(eq: &[[f64; 4]; 2], assignment: &[Option<f64>; 4]) -> Option<[f64; 4]> {
    let free: Vec<usize> = (0..4).filter(|&j| assignment[j].is_none()).collect();
    let fixed = |row: &[f64; 4]| -> f64 { (0..4).filter_map(|j| assignment[j].map(|v| row[j] * v)).sum() };
    let rhs = [-fixed(&eq[0]), -fixed(&eq[1])];
    let mut p = [0.0; 4];
    for j in 0..4 {
        p[j] = assignment[j].unwrap_or(0.0);
    }
    match free.as_slice() {
        [] => {}
        &[j] => {
            let k = if eq[0][j].abs() >= eq[1][j].abs() { 0 } else { 1 };
            if eq[k][j].abs() < 1e-14 {
                return None;
            }
            p[j] = rhs[k] / eq[k][j];
        }
        &[j, k] => {
            let det = eq[0][j] * eq[1][k] - eq[0][k] * eq[1][j];
            if det.abs() < 1e-14 {
                return None;
            }
            p[j] = (rhs[0] * eq[1][k] - rhs[1] * eq[0][k]) / det;
            p[k] = (eq[0][j] * rhs[1] - eq[1][j] * rhs[0]) / det;
        }
        _ => return None,
    }
    let feasible = p.iter().all(|&v| (-FEASIBILITY..=1.0 + FEASIBILITY).contains(&v))
        && eq.iter().all(|row| row.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().abs() <= 1e-9);
    feasible.then(|| p.map(|v| v.clamp(0.0, 1.0)))
}

/// Minimizes the expected 0-1 loss of `Ỹ` subject to equal TPR and FPR across groups,
/// by enumerating the vertices of the feasible polytope.
pub fn hardt_fit(labels: &[u8], predictions: &[u8], s: &[u8]) -> Result<MixingPolicy> {
    let stats = CellStats::new(labels, predictions, s)?;
    let eq = equality_rows(&stats);
    let (c, c0) = loss_coefficients(&stats);
    let identity = [0.0, 0.0, 1.0, 1.0];
    let distance = |p: &[f64; 4]| p.iter().zip(&identity).map(|(a, b)| (a - b).abs()).sum::<f64>();

    let mut best: Option<([f64; 4], f64)> = None;
    // Each variable is fixed at 0, fixed at 1, or left free; at most two are free.
    for code in 0..81usize {
        let mut assignment = [None; 4];
        let mut rest = code;
        for slot in assignment.iter_mut() {
            *slot = match rest % 3 {
                0 => Some(0.0),
                1 => Some(1.0),
                _ => None,
            };
            rest /= 3;
        }
        if assignment.iter().filter(|a| a.is_none()).count() > 2 {
            continue;
        }
        let Some(p) = complete_vertex(&eq, &assignment) else { continue };
        let obj = evaluate(&c, c0, &p);
        let better = match best {
            None => true,
            Some((bp, bo)) => obj < bo - 1e-12 || (obj <= bo + 1e-12 && distance(&p) < distance(&bp)),
        };
        if better {
            best = Some((p, obj));
        }
    }
    let (p, objective_loss) = best.expect("the all-zero policy is always feasible");
    Ok(MixingPolicy { p: [[p[0], p[1]], [p[2], p[3]]], objective_loss })
}

/// `Pr(Ỹ = 1 | S = s, Y = y)` implied by `policy` on the fitting data, indexed `[s][y]`.
pub fn hardt_implied_rates(policy: &MixingPolicy, labels: &[u8], predictions: &[u8], s: &[u8]) -> Result<[[f64; 2]; 2]> {
    let stats = CellStats::new(labels, predictions, s)?;
    let mut out = [[0.0; 2]; 2];
    for si in 0..2 {
        for y in 0..2 {
            let r = stats.rate[si][y];
            out[si][y] = policy.p[1][si] * r + policy.p[0][si] * (1.0 - r);
        }
    }
    Ok(out)
}

/// Applies the policy with row keys `0..n`.
pub fn hardt_apply(policy: &MixingPolicy, predictions: &[u8], s: &[u8], seed: u64) -> Result<Vec<u8>> {
    let keys: Vec<u64> = (0..predictions.len() as u64).collect();
    hardt_apply_keyed(policy, predictions, s, &keys, seed)
}

/// Row `t` gets `Ỹ = 1` iff `u(seed, key_t) < p[Ŷ_t][S_t]`.
pub fn hardt_apply_keyed(policy: &MixingPolicy, predictions: &[u8], s: &[u8], keys: &[u64], seed: u64) -> Result<Vec<u8>> {
    policy.validate()?;
    if predictions.len() != s.len() || keys.len() != s.len() {
        bail!(Input, "predictions, sensitive and key columns differ in length");
    }
    Ok(predictions
        .iter()
        .zip(s)
        .zip(keys)
        .map(|((&p, &si), &k)| u8::from(rng::row_uniform(seed, k) < policy.p[p as usize][si as usize]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPolicy {
    pub favored_group: Group,
    pub alpha: f64,
    pub base_rate: f64,
    pub cost_favored: f64,
    pub cost_unfavored: f64,
    /// Set when the closed-form α fell outside `[0, 1]`.
    pub clipped: bool,
}

/// `(C_f − C_u) / (C_f − C_trivial)` clipped to `[0, 1]`; the flag reports clipping.
pub fn pleiss_alpha(cost_favored: f64, cost_unfavored: f64, cost_trivial: f64) -> (f64, bool) {
    let gap = cost_favored - cost_unfavored;
    if gap <= 0.0 {
        return (0.0, gap < 0.0);
    }
    let span = cost_favored - cost_trivial;
    if span <= gap {
        return (1.0, span < gap);
    }
    (gap / span, false)
}

/// Equal-opportunity calibration: the group with the higher TPR is mixed with a
/// base-rate predictor until its TPR matches the other group's.
pub fn pleiss_fit(labels: &[u8], probabilities: &[f64], s: &[u8]) -> Result<CalibrationPolicy> {
    check_columns(probabilities, s)?;
    if labels.len() != s.len() || labels.is_empty() {
        bail!(Input, "labels and sensitive columns differ in length");
    }
    let mut positives = [0usize; 2];
    let mut true_pos = [0usize; 2];
    let mut size = [0usize; 2];
    let mut predicted_pos = [0usize; 2];
    for ((&y, &p), &si) in labels.iter().zip(probabilities).zip(s) {
        let g = si as usize;
        let yhat = usize::from(p >= 0.5);
        size[g] += 1;
        predicted_pos[g] += yhat;
        if y == 1 {
            positives[g] += 1;
            true_pos[g] += yhat;
        }
    }
    if positives.contains(&0) {
        bail!(Fit, "each group needs at least one positive row");
    }
    let tpr = [0, 1].map(|g| true_pos[g] as f64 / positives[g] as f64);
    let favored = if tpr[1] >= tpr[0] { 1 } else { 0 };
    let unfavored = 1 - favored;
    let base_rate = predicted_pos[favored] as f64 / size[favored] as f64;
    let (alpha, clipped) = pleiss_alpha(tpr[favored], tpr[unfavored], base_rate);
    if clipped {
        log::warn!(
            "calibration mixing rate clipped to {alpha}: favored TPR {:.4}, unfavored TPR {:.4}, base rate {:.4}",
            tpr[favored],
            tpr[unfavored],
            base_rate
        );
    }
    Ok(CalibrationPolicy {
        favored_group: Group::from_sensitive(favored as u8),
        alpha,
        base_rate,
        cost_favored: tpr[favored],
        cost_unfavored: tpr[unfavored],
        clipped,
    })
}

pub fn pleiss_apply(policy: &CalibrationPolicy, predictions: &[u8], s: &[u8], seed: u64) -> Result<Vec<u8>> {
    let keys: Vec<u64> = (0..predictions.len() as u64).collect();
    pleiss_apply_keyed(policy, predictions, s, &keys, seed)
}

/// Favored-group rows are withheld with probability α and replaced by an independent
/// Bernoulli(base rate) draw.
pub fn pleiss_apply_keyed(policy: &CalibrationPolicy, predictions: &[u8], s: &[u8], keys: &[u64], seed: u64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&policy.alpha) || !(0.0..=1.0).contains(&policy.base_rate) {
        bail!(Parameter, "alpha and base rate must lie in [0, 1]");
    }
    if predictions.len() != s.len() || keys.len() != s.len() {
        bail!(Input, "predictions, sensitive and key columns differ in length");
    }
    let favored = policy.favored_group.sensitive_value();
    let (withhold_seed, draw_seed) = (rng::derive_seed(seed, 1), rng::derive_seed(seed, 2));
    Ok(predictions
        .iter()
        .zip(s)
        .zip(keys)
        .map(|((&p, &si), &k)| {
            if si == favored && rng::row_uniform(withhold_seed, k) < policy.alpha {
                u8::from(rng::row_uniform(draw_seed, k) < policy.base_rate)
            } else {
                p
            }
        })
        .collect())
}
