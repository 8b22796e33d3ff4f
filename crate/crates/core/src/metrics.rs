//! Correctness and fairness metrics.
//!
//! Ratios with an empty denominator are `None`. Disparate impact additionally uses
//! `f64::INFINITY` when the privileged group receives no positive predictions while
//! the unprivileged group does.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{project_attributes, Dataset};
use crate::error::{bail, Result};
use crate::model::{fit_logistic, predict_proba, TrainOptions};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, y: u8, yhat: u8) {
        match (y, yhat) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, 0) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

impl core::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_binary(name: &str, v: &[u8]) -> Result<()> {
    if v.iter().any(|&x| x > 1) {
        bail!(Input, "{name} must be 0/1");
    }
    Ok(())
}

fn check_lengths(columns: &[(&str, usize)]) -> Result<()> {
    let n = columns[0].1;
    if n == 0 {
        bail!(Input, "{} is empty", columns[0].0);
    }
    if let Some((name, len)) = columns.iter().find(|(_, len)| *len != n) {
        bail!(Input, "{name} has {len} rows, expected {n}");
    }
    Ok(())
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    check_lengths(&[("labels", labels.len()), ("predictions", predictions.len())])?;
    check_binary("labels", labels)?;
    check_binary("predictions", predictions)?;
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        cm.add(y, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Correctness {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn correctness_metrics(cm: &ConfusionMatrix) -> Correctness {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Correctness { accuracy: ratio(cm.tp + cm.tn, cm.total()), precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Unprivileged,
    Privileged,
}

impl Group {
    pub fn from_sensitive(s: u8) -> Group {
        if s == 1 {
            Group::Privileged
        } else {
            Group::Unprivileged
        }
    }

    pub fn sensitive_value(self) -> u8 {
        match self {
            Group::Unprivileged => 0,
            Group::Privileged => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group: Group,
    pub confusion: ConfusionMatrix,
    /// `Pr(Ŷ = 1 | S = s)`.
    pub positive_rate: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

impl GroupOutcome {
    fn from_confusion(group: Group, cm: ConfusionMatrix) -> GroupOutcome {
        GroupOutcome {
            group,
            confusion: cm,
            positive_rate: ratio(cm.tp + cm.fp, cm.total()),
            tpr: ratio(cm.tp, cm.tp + cm.fn_),
            tnr: ratio(cm.tn, cm.tn + cm.fp),
            fpr: ratio(cm.fp, cm.tn + cm.fp),
            fnr: ratio(cm.fn_, cm.tp + cm.fn_),
        }
    }
}

/// Per-group outcomes, indexed by the sensitive value (`[unprivileged, privileged]`).
pub fn group_outcomes(s: &[u8], labels: &[u8], predictions: &[u8]) -> Result<[GroupOutcome; 2]> {
    check_lengths(&[("sensitive", s.len()), ("labels", labels.len()), ("predictions", predictions.len())])?;
    check_binary("sensitive", s)?;
    check_binary("labels", labels)?;
    check_binary("predictions", predictions)?;
    let mut cms = [ConfusionMatrix::default(); 2];
    for ((&si, &y), &p) in s.iter().zip(labels).zip(predictions) {
        cms[si as usize].add(y, p);
    }
    Ok([
        GroupOutcome::from_confusion(Group::Unprivileged, cms[0]),
        GroupOutcome::from_confusion(Group::Privileged, cms[1]),
    ])
}

fn positive_counts(s: &[u8], predictions: &[u8]) -> Result<[(u64, u64); 2]> {
    check_lengths(&[("sensitive", s.len()), ("predictions", predictions.len())])?;
    check_binary("sensitive", s)?;
    check_binary("predictions", predictions)?;
    let mut counts = [(0u64, 0u64); 2];
    for (&si, &p) in s.iter().zip(predictions) {
        counts[si as usize].0 += u64::from(p);
        counts[si as usize].1 += 1;
    }
    if counts.iter().any(|c| c.1 == 0) {
        bail!(Input, "both sensitive groups must be nonempty");
    }
    Ok(counts)
}

/// `Pr(Ŷ=1 | S=0) / Pr(Ŷ=1 | S=1)`; infinite when only the privileged rate is zero,
/// absent when both are.
pub fn disparate_impact(s: &[u8], predictions: &[u8]) -> Result<Option<f64>> {
    let [(pos0, n0), (pos1, n1)] = positive_counts(s, predictions)?;
    let unpriv = pos0 as f64 / n0 as f64;
    let priv_ = pos1 as f64 / n1 as f64;
    Ok(match (pos0, pos1) {
        (0, 0) => None,
        (_, 0) => Some(f64::INFINITY),
        _ => Some(unpriv / priv_),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateBalances {
    pub tprb: Option<f64>,
    pub tnrb: Option<f64>,
}

/// `TPR_priv − TPR_unpriv` and `TNR_priv − TNR_unpriv`.
pub fn rate_balances(s: &[u8], labels: &[u8], predictions: &[u8]) -> Result<RateBalances> {
    let [unpriv, priv_] = group_outcomes(s, labels, predictions)?;
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    Ok(RateBalances { tprb: diff(priv_.tpr, unpriv.tpr), tnrb: diff(priv_.tnr, unpriv.tnr) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Determinism {
    Deterministic,
    /// Randomized, but every random draw is fixed by this seed and the row id.
    FrozenSeed(u64),
    Randomized,
}

/// A prediction function over `(X, S)`.
pub trait Classifier {
    fn predict(&self, data: &Dataset) -> Result<Vec<u8>>;

    fn determinism(&self) -> Determinism {
        Determinism::Deterministic
    }
}

/// Rows needed so that a sampled estimate is within `error_bound` of the exhaustive
/// value with probability `confidence` (Hoeffding).
pub fn hoeffding_sample_size(confidence: f64, error_bound: f64) -> usize {
    let delta = 1.0 - confidence;
    libm::ceil(libm::log(2.0 / delta) / (2.0 * error_bound * error_bound)) as usize
}

/// Fraction of evaluated tuples whose prediction changes when only `S` is flipped.
///
/// All tuples are evaluated unless the Hoeffding sample size is smaller than the
/// dataset, in which case a seed-determined sample of that size is used.
pub fn causal_discrimination(
    classifier: &dyn Classifier,
    data: &Dataset,
    confidence: f64,
    error_bound: f64,
    seed: u64,
) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0 && error_bound > 0.0 && error_bound < 1.0) {
        bail!(Parameter, "confidence and error bound must lie in (0, 1)");
    }
    if classifier.determinism() == Determinism::Randomized {
        bail!(Contract, "causal discrimination needs a deterministic or seed-frozen classifier");
    }
    let needed = hoeffding_sample_size(confidence, error_bound);
    let sample;
    let evaluated = if needed < data.n_rows() {
        let mut idx = rng::permutation(data.n_rows(), seed);
        idx.truncate(needed);
        idx.sort_unstable();
        sample = data.select_rows(&idx);
        &sample
    } else {
        data
    };
    let before = classifier.predict(evaluated)?;
    let after = classifier.predict(&evaluated.with_sensitive_flipped())?;
    if before.len() != evaluated.n_rows() || after.len() != before.len() {
        bail!(Contract, "classifier returned the wrong number of predictions");
    }
    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    Ok(changed as f64 / before.len() as f64)
}

pub const PROPENSITY_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityWeights {
    pub resolving: Vec<String>,
    /// `Pr(S = 0 | R)` per row, clipped to `[1e-6, 1 − 1e-6]`.
    pub score: Vec<f64>,
    /// `score / (1 − score)` per row.
    pub weight: Vec<f64>,
}

impl PropensityWeights {
    /// Builds weights from already-estimated propensity scores.
    ///
    /// Scores at exactly 0 give weight 0; every other score is clipped first.
    pub fn from_scores(resolving: Vec<String>, scores: &[f64]) -> Result<Self> {
        if scores.iter().any(|p| !(0.0..=1.0).contains(p)) {
            bail!(Parameter, "propensity scores must lie in [0, 1]");
        }
        let score: Vec<f64> = scores
            .iter()
            .map(|&p| if p == 0.0 { 0.0 } else { p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP) })
            .collect();
        let weight = score.iter().map(|p| p / (1.0 - p)).collect();
        Ok(PropensityWeights { resolving, score, weight })
    }
}

/// Fits `Pr(S = 0 | R)` by logistic regression on the resolving attributes.
pub fn propensity_weights<S: AsRef<str>>(data: &Dataset, resolving: &[S], opts: &TrainOptions) -> Result<PropensityWeights> {
    if resolving.is_empty() {
        bail!(Parameter, "at least one resolving attribute is required");
    }
    let projected = project_attributes(data, resolving)?;
    let target = projected.with_label(data.sensitive().iter().map(|&s| 1 - s).collect())?;
    let opts = TrainOptions { use_sensitive: false, ..opts.clone() };
    let model = fit_logistic(&target, None, &opts)?;
    let scores: Vec<f64> = predict_proba(&model, &target)?
        .into_iter()
        .map(|p| p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP))
        .collect();
    PropensityWeights::from_scores(resolving.iter().map(|r| String::from(r.as_ref())).collect(), &scores)
}

/// Propensity-weighted privileged positive rate minus the unprivileged positive rate.
///
/// Absent when the weighted privileged mass is zero.
pub fn causal_risk_difference(s: &[u8], predictions: &[u8], weights: &PropensityWeights) -> Result<Option<f64>> {
    let [(pos0, n0), _] = positive_counts(s, predictions)?;
    if weights.weight.len() != s.len() {
        bail!(Input, "{} propensity weights for {} rows", weights.weight.len(), s.len());
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((&si, &p), &w) in s.iter().zip(predictions).zip(&weights.weight) {
        if si == 1 {
            den += w;
            if p == 1 {
                num += w;
            }
        }
    }
    if !(den > 0.0) {
        log::warn!("causal risk difference undefined: zero weighted privileged mass");
        return Ok(None);
    }
    Ok(Some(num / den - pos0 as f64 / n0 as f64))
}

/// Unnormalized fairness scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RawFairness {
    pub di: Option<f64>,
    pub tprb: Option<f64>,
    pub tnrb: Option<f64>,
    pub cd: Option<f64>,
    pub crd: Option<f64>,
}

/// Scores mapped to `[0, 1]`, where 1 is perfectly fair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFairness {
    pub di_star: Option<f64>,
    pub tprb: Option<f64>,
    pub tnrb: Option<f64>,
    pub cd: Option<f64>,
    pub crd: Option<f64>,
}

/// Set when the raw value indicates discrimination against the privileged group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReverseFlags {
    pub di: bool,
    pub tprb: bool,
    pub tnrb: bool,
    pub crd: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub raw: RawFairness,
    pub normalized: NormalizedFairness,
    pub reverse: ReverseFlags,
}

impl FairnessReport {
    pub fn new(raw: RawFairness) -> Self {
        let (normalized, reverse) = normalize_fairness(&raw);
        FairnessReport { raw, normalized, reverse }
    }
}

/// `DI* = min(DI, 1/DI)`; the balance metrics become `1 − |x|` and CD becomes `1 − CD`.
pub fn normalize_fairness(raw: &RawFairness) -> (NormalizedFairness, ReverseFlags) {
    let di_star = raw.di.map(|di| {
        if di == 0.0 || di.is_infinite() {
            0.0
        } else {
            di.min(1.0 / di)
        }
    });
    let balance = |v: Option<f64>| v.map(|x| (1.0 - x.abs()).clamp(0.0, 1.0));
    let normalized = NormalizedFairness {
        di_star,
        tprb: balance(raw.tprb),
        tnrb: balance(raw.tnrb),
        cd: raw.cd.map(|cd| (1.0 - cd).clamp(0.0, 1.0)),
        crd: balance(raw.crd),
    };
    let negative = |v: Option<f64>| v.is_some_and(|x| x < 0.0);
    let reverse = ReverseFlags {
        di: raw.di.is_some_and(|d| d > 1.0),
        tprb: negative(raw.tprb),
        tnrb: negative(raw.tnrb),
        crd: negative(raw.crd),
    };
    (normalized, reverse)
}
