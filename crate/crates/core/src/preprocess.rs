//! Pre-processing: reweighing / weighted resampling and disparate-impact repair.

use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, Dataset, Encoding};
use crate::error::{bail, Result};
use crate::rng;

/// Joint `(S, Y)` probabilities indexed `[s][y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilityTable {
    /// `Pr(S = s) · Pr(Y = y)`.
    pub expected: [[f64; 2]; 2],
    pub observed: [[f64; 2]; 2],
    /// `expected / observed`; absent for empty cells.
    pub weight: [[Option<f64>; 2]; 2],
}

impl JointProbabilityTable {
    pub fn from_columns(s: &[u8], y: &[u8]) -> Result<Self> {
        Self::weighted(s, y, None)
    }

    /// Observed probabilities computed under per-row weights.
    pub fn weighted(s: &[u8], y: &[u8], weights: Option<&[f64]>) -> Result<Self> {
        if s.is_empty() || s.len() != y.len() || weights.is_some_and(|w| w.len() != s.len()) {
            bail!(Input, "joint table needs equal nonempty columns");
        }
        let mut mass = [[0.0; 2]; 2];
        for (i, (&si, &yi)) in s.iter().zip(y).enumerate() {
            mass[si as usize][yi as usize] += weights.map_or(1.0, |w| w[i]);
        }
        let total: f64 = mass.iter().flatten().sum();
        if !(total > 0.0) {
            bail!(Parameter, "total weight must be positive");
        }
        let observed = mass.map(|row| row.map(|m| m / total));
        let ps = [observed[0][0] + observed[0][1], observed[1][0] + observed[1][1]];
        let py = [observed[0][0] + observed[1][0], observed[0][1] + observed[1][1]];
        let mut expected = [[0.0; 2]; 2];
        let mut weight = [[None; 2]; 2];
        for s in 0..2 {
            for y in 0..2 {
                expected[s][y] = ps[s] * py[y];
                if observed[s][y] > 0.0 {
                    weight[s][y] = Some(expected[s][y] / observed[s][y]);
                }
            }
        }
        Ok(JointProbabilityTable { expected, observed, weight })
    }

    /// `max_{s,y} |expected − observed|`.
    pub fn max_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for s in 0..2 {
            for y in 0..2 {
                gap = gap.max((self.expected[s][y] - self.observed[s][y]).abs());
            }
        }
        gap
    }
}

/// Per-row weights `Pr_exp(S_t, Y_t) / Pr_obs(S_t, Y_t)`.
pub fn reweigh(data: &Dataset) -> Result<(JointProbabilityTable, Vec<f64>)> {
    let table = JointProbabilityTable::from_columns(data.sensitive(), data.label())?;
    for s in 0..2 {
        for y in 0..2 {
            if table.weight[s][y].is_none() {
                log::warn!("reweighing: no rows with S={s}, Y={y}; that cell's weight is undefined");
            }
        }
    }
    let weights = data
        .sensitive()
        .iter()
        .zip(data.label())
        .map(|(&s, &y)| table.weight[s as usize][y as usize].unwrap_or(0.0))
        .collect();
    Ok((table, weights))
}

/// Draws `n` rows with replacement, each with probability proportional to its weight.
pub fn weighted_resample(data: &Dataset, weights: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    if weights.len() != data.n_rows() {
        bail!(Input, "{} weights for {} rows", weights.len(), data.n_rows());
    }
    if n == 0 {
        bail!(Parameter, "resample size must be at least 1");
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        bail!(Parameter, "weights must be finite and nonnegative");
    }
    let dist = match WeightedIndex::new(weights) {
        Ok(d) => d,
        Err(_) => bail!(Parameter, "weights must have a positive sum"),
    };
    let mut r = rng::seeded(seed);
    let idx: Vec<usize> = (0..n).map(|_| dist.sample(&mut r)).collect();
    Ok(data.select_rows(&idx).with_log(alloc::format!("weighted_resample n={n} seed={seed}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairParams {
    pub lambda: f64,
    /// Attributes to repair; `None` selects every numeric predictive attribute.
    pub attributes: Option<Vec<String>>,
    /// Also repair ordinal-encoded categorical attributes when `attributes` is `None`.
    pub include_ordinal: bool,
}

impl RepairParams {
    pub fn new(lambda: f64) -> Self {
        RepairParams { lambda, attributes: None, include_ordinal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnMap {
    name: String,
    column: usize,
    /// Sorted values per group, indexed by `S`.
    groups: [Vec<f64>; 2],
}

impl ColumnMap {
    /// Midpoint empirical CDF of `x` within group `g`.
    fn rank(&self, g: usize, x: f64) -> f64 {
        let v = &self.groups[g];
        let below = v.partition_point(|&a| a < x);
        let at_most = v.partition_point(|&a| a <= x);
        (below as f64 + 0.5 * (at_most - below) as f64) / v.len() as f64
    }

    /// Group quantile with linear interpolation between order statistics.
    fn quantile(&self, g: usize, q: f64) -> f64 {
        let v = &self.groups[g];
        let h = (q * v.len() as f64 - 0.5).clamp(0.0, (v.len() - 1) as f64);
        let lo = libm::floor(h) as usize;
        let frac = h - lo as f64;
        if lo + 1 < v.len() {
            v[lo] + frac * (v[lo + 1] - v[lo])
        } else {
            v[lo]
        }
    }

    fn target(&self, g: usize, x: f64) -> f64 {
        let q = self.rank(g, x);
        0.5 * (self.quantile(0, q) + self.quantile(1, q))
    }
}

/// Group-conditional quantile functions frozen from one dataset, applicable to
/// any schema-compatible dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairMap {
    pub lambda: f64,
    columns: Vec<ColumnMap>,
}

impl RepairMap {
    pub fn fit(data: &Dataset, params: &RepairParams) -> Result<RepairMap> {
        if !(0.0..=1.0).contains(&params.lambda) {
            bail!(Parameter, "lambda must lie in [0, 1]");
        }
        let n_priv = data.count_where(Some(1), None);
        if n_priv == 0 || n_priv == data.n_rows() {
            bail!(Parameter, "repair needs both sensitive groups");
        }
        let repairable = |kind: AttributeKind, encoding: Encoding, explicit: bool| match kind {
            AttributeKind::Numeric => true,
            AttributeKind::Categorical => encoding == Encoding::Ordinal && (explicit || params.include_ordinal),
        };
        let selected: Vec<(String, usize)> = match &params.attributes {
            Some(names) => {
                let mut out = Vec::new();
                for name in names {
                    let Some(attr) = data.attribute(name).filter(|a| a.is_predictive()) else {
                        bail!(Schema, "unknown predictive attribute {name}");
                    };
                    if !repairable(attr.kind, attr.encoding, true) {
                        bail!(Parameter, "attribute {name} is not numeric or ordinal");
                    }
                    out.push((attr.name.clone(), attr.first_column));
                }
                out
            }
            None => data
                .predictive_attributes()
                .filter(|a| repairable(a.kind, a.encoding, false))
                .map(|a| (a.name.clone(), a.first_column))
                .collect(),
        };
        let columns = selected
            .into_iter()
            .map(|(name, column)| {
                let mut groups = [Vec::new(), Vec::new()];
                for (i, &s) in data.sensitive().iter().enumerate() {
                    groups[s as usize].push(data.row(i)[column]);
                }
                for g in &mut groups {
                    g.sort_by(f64::total_cmp);
                }
                ColumnMap { name, column, groups }
            })
            .collect();
        Ok(RepairMap { lambda: params.lambda, columns })
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Repairs one encoded row belonging to group `s` in place.
    pub fn repair_row(&self, row: &mut [f64], s: u8) {
        if self.lambda == 0.0 {
            return;
        }
        for c in &self.columns {
            let x = row[c.column];
            let target = c.target(s as usize, x);
            row[c.column] = if self.lambda == 1.0 { target } else { (1.0 - self.lambda) * x + self.lambda * target };
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        for c in &self.columns {
            if data.attribute(&c.name).is_none_or(|a| a.first_column != c.column) {
                bail!(Schema, "dataset layout does not match repair map attribute {}", c.name);
            }
        }
        let p = data.n_features();
        let mut features = data.features().to_vec();
        for (i, &s) in data.sensitive().iter().enumerate() {
            self.repair_row(&mut features[i * p..(i + 1) * p], s);
        }
        Ok(data.with_features(features)?.with_log(alloc::format!("dir_repair lambda={}", self.lambda)))
    }
}

/// Moves each repaired attribute toward the median of the group quantile functions
/// at the value's within-group rank; `λ = 0` returns the input unchanged.
pub fn dir_repair(data: &Dataset, params: &RepairParams) -> Result<Dataset> {
    RepairMap::fit(data, params)?.apply(data)
}
