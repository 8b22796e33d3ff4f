//! Synthetic biased benchmark data.
//!
//! Two groups with different positive rates; every feature carries label signal of
//! decreasing strength plus a group shift, so a fairness-unaware classifier
//! inherits the group disparity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeRole, AttributeSpec, Dataset};
use crate::error::{bail, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub rows: usize,
    pub features: usize,
    /// Share of privileged rows.
    pub privileged_fraction: f64,
    pub positive_rate_privileged: f64,
    pub positive_rate_unprivileged: f64,
    /// Label signal carried by the first feature; feature `j` carries `signal / (1 + j/2)`.
    pub signal: f64,
    /// Mean offset of every feature for privileged rows.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 10_000,
            features: 6,
            privileged_fraction: 0.5,
            positive_rate_privileged: 0.6,
            positive_rate_unprivileged: 0.3,
            signal: 1.0,
            shift: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_rows(rows: usize, seed: u64) -> Self {
        SynthConfig { rows, seed, ..Default::default() }
    }
}

/// Generates `rows` tuples; features are named `x0, x1, …` and `x0` is marked as a
/// resolving candidate.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let probs = [cfg.privileged_fraction, cfg.positive_rate_privileged, cfg.positive_rate_unprivileged];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!(Parameter, "probabilities must lie in [0, 1]");
    }
    if cfg.rows == 0 || cfg.features == 0 {
        bail!(Parameter, "rows and features must be positive");
    }
    let mut r = rng::seeded(cfg.seed);
    let scales: Vec<f64> = (0..cfg.features).map(|j| cfg.signal / (1.0 + j as f64 / 2.0)).collect();
    let mut features = Vec::with_capacity(cfg.rows * cfg.features);
    let mut s = Vec::with_capacity(cfg.rows);
    let mut y = Vec::with_capacity(cfg.rows);
    for _ in 0..cfg.rows {
        let si = r.random_bool(cfg.privileged_fraction);
        let rate = if si { cfg.positive_rate_privileged } else { cfg.positive_rate_unprivileged };
        let yi = r.random_bool(rate);
        let sign = if yi { 1.0 } else { -1.0 };
        for scale in &scales {
            let noise: f64 = r.sample(StandardNormal);
            features.push(scale * sign + cfg.shift * f64::from(u8::from(si)) + noise);
        }
        s.push(u8::from(si));
        y.push(u8::from(yi));
    }
    let mut schema: Vec<AttributeSpec> = (0..cfg.features).map(|j| AttributeSpec::numeric(format!("x{j}"))).collect();
    schema[0] = schema[0].clone().with_role(AttributeRole::ResolvingCandidate);
    schema.push(AttributeSpec::target(
        "group",
        AttributeRole::Sensitive,
        vec![String::from("unprivileged"), String::from("privileged")],
    ));
    schema.push(AttributeSpec::target(
        "outcome",
        AttributeRole::Label,
        vec![String::from("unfavorable"), String::from("favorable")],
    ));
    Ok(Dataset::new(schema, features, s, y)?.with_log(format!(
        "synthetic rows={} features={} seed={} positive_rates={}/{}",
        cfg.rows, cfg.features, cfg.seed, cfg.positive_rate_privileged, cfg.positive_rate_unprivileged
    )))
}
