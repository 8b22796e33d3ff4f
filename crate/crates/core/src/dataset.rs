//! Encoded tabular datasets with a binary sensitive attribute and a binary label.
//!
//! A [`Dataset`] stores the encoded predictive attributes as a dense row-major
//! matrix next to the `S` and `Y` columns. Categorical predictive attributes occupy
//! one column (ordinal code) or one column per dictionary value (one-hot); the
//! schema records which columns belong to which attribute, so slicing operations
//! can work per attribute.
//!
//! Every row carries a stable `row_id` assigned at construction. Slicing keeps the
//! ids, which lets callers check that `(X, S, Y)` triples were never misaligned.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeRole {
    Predictive,
    Sensitive,
    Label,
    /// Predictive attribute that may also serve as a resolving attribute for CRD.
    ResolvingCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    OneHot,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub role: AttributeRole,
    /// Only meaningful for categorical predictive attributes.
    pub encoding: Encoding,
    /// Categorical values in code order, discovered at load time.
    pub dictionary: Vec<String>,
    /// First encoded column in the feature matrix (predictive attributes only).
    pub first_column: usize,
    /// Number of encoded columns; zero for the sensitive and label attributes.
    pub width: usize,
}

impl AttributeSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Numeric,
            role: AttributeRole::Predictive,
            encoding: Encoding::Ordinal,
            dictionary: Vec::new(),
            first_column: 0,
            width: 1,
        }
    }

    pub fn categorical(name: impl Into<String>, dictionary: Vec<String>, encoding: Encoding) -> Self {
        let width = match encoding {
            Encoding::OneHot => dictionary.len(),
            Encoding::Ordinal => 1,
        };
        AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Categorical,
            role: AttributeRole::Predictive,
            encoding,
            dictionary,
            first_column: 0,
            width,
        }
    }

    /// A non-encoded column (sensitive or label).
    pub fn target(name: impl Into<String>, role: AttributeRole, dictionary: Vec<String>) -> Self {
        AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Categorical,
            role,
            encoding: Encoding::Ordinal,
            dictionary,
            first_column: 0,
            width: 0,
        }
    }

    pub fn with_role(mut self, role: AttributeRole) -> Self {
        self.role = role;
        self
    }

    pub fn is_predictive(&self) -> bool {
        matches!(self.role, AttributeRole::Predictive | AttributeRole::ResolvingCandidate)
    }

    pub fn columns(&self) -> core::ops::Range<usize> {
        self.first_column..self.first_column + self.width
    }

    fn encoded_names(&self) -> Vec<String> {
        match (self.kind, self.encoding) {
            (AttributeKind::Categorical, Encoding::OneHot) => {
                self.dictionary.iter().map(|v| format!("{}={}", self.name, v)).collect()
            }
            _ => alloc::vec![self.name.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    feature_names: Vec<String>,
    sensitive: Vec<u8>,
    label: Vec<u8>,
    row_ids: Vec<u64>,
    schema: Vec<AttributeSpec>,
    provenance: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from a schema and row-major encoded features.
    ///
    /// Column offsets of predictive attributes are (re)assigned in schema order.
    pub fn new(
        mut schema: Vec<AttributeSpec>,
        features: Vec<f64>,
        sensitive: Vec<u8>,
        label: Vec<u8>,
    ) -> Result<Self> {
        let count = |role| schema.iter().filter(|a| a.role == role).count();
        if count(AttributeRole::Label) != 1 {
            bail!(Schema, "exactly one label attribute required");
        }
        if count(AttributeRole::Sensitive) != 1 {
            bail!(Schema, "exactly one sensitive attribute required");
        }
        let mut offset = 0;
        let mut feature_names = Vec::new();
        for attr in schema.iter_mut() {
            if attr.is_predictive() {
                attr.first_column = offset;
                offset += attr.width;
                feature_names.extend(attr.encoded_names());
            } else {
                attr.first_column = 0;
                attr.width = 0;
            }
        }
        let n = sensitive.len();
        if n == 0 {
            bail!(Ingestion, "dataset has no rows");
        }
        if label.len() != n || features.len() != n * offset {
            bail!(
                Schema,
                "arity mismatch: {} sensitive, {} labels, {} feature values for {} columns",
                n,
                label.len(),
                features.len(),
                offset
            );
        }
        if sensitive.iter().chain(label.iter()).any(|&v| v > 1) {
            bail!(Encoding, "sensitive and label columns must be 0/1");
        }
        Ok(Dataset {
            features,
            n_features: offset,
            feature_names,
            sensitive,
            label,
            row_ids: (0..n as u64).collect(),
            schema,
            provenance: Vec::new(),
        })
    }

    /// All-numeric dataset; the sensitive column is named `s` and the label `y`.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], sensitive: Vec<u8>, label: Vec<u8>) -> Result<Self> {
        let mut schema: Vec<AttributeSpec> = names.iter().map(|n| AttributeSpec::numeric(*n)).collect();
        schema.push(AttributeSpec::target("s", AttributeRole::Sensitive, Vec::new()));
        schema.push(AttributeSpec::target("y", AttributeRole::Label, Vec::new()));
        if let Some(bad) = rows.iter().find(|r| r.len() != names.len()) {
            bail!(Schema, "row of arity {} for {} attributes", bad.len(), names.len());
        }
        Dataset::new(schema, rows.concat(), sensitive, label)
    }

    pub fn n_rows(&self) -> usize {
        self.sensitive.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn schema(&self) -> &[AttributeSpec] {
        &self.schema
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn log(&mut self, line: impl Into<String>) {
        self.provenance.push(line.into());
    }

    pub fn with_log(mut self, line: impl Into<String>) -> Self {
        self.log(line);
        self
    }

    pub fn predictive_attributes(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.schema.iter().filter(|a| a.is_predictive())
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.schema.iter().find(|a| a.name == name)
    }

    pub fn sensitive_attribute(&self) -> &AttributeSpec {
        self.schema.iter().find(|a| a.role == AttributeRole::Sensitive).expect("validated")
    }

    pub fn label_attribute(&self) -> &AttributeSpec {
        self.schema.iter().find(|a| a.role == AttributeRole::Label).expect("validated")
    }

    pub fn resolving_candidates(&self) -> Vec<String> {
        self.schema
            .iter()
            .filter(|a| a.role == AttributeRole::ResolvingCandidate)
            .map(|a| a.name.clone())
            .collect()
    }

    /// Value of one encoded column across all rows.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.features[i * self.n_features + j]).collect()
    }

    /// Rows at `indices`, in that order, keeping their row ids.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features;
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: d,
            feature_names: self.feature_names.clone(),
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
            label: indices.iter().map(|&i| self.label[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            schema: self.schema.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same rows and schema with replaced feature values.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Dataset> {
        if features.len() != self.features.len() {
            bail!(Schema, "replacement features have wrong length");
        }
        Ok(Dataset { features, ..self.clone() })
    }

    /// Same rows with every sensitive value flipped (the CD intervention).
    pub fn with_sensitive_flipped(&self) -> Dataset {
        Dataset {
            sensitive: self.sensitive.iter().map(|&s| 1 - s).collect(),
            ..self.clone()
        }
    }

    /// Same rows with the label column replaced.
    pub fn with_label(&self, label: Vec<u8>) -> Result<Dataset> {
        if label.len() != self.n_rows() || label.iter().any(|&v| v > 1) {
            bail!(Encoding, "replacement label must be a 0/1 column of matching length");
        }
        Ok(Dataset { label, ..self.clone() })
    }

    /// Decodes a categorical attribute of row `i` back to its raw value.
    pub fn decode_categorical(&self, i: usize, name: &str) -> Option<&str> {
        let attr = self.attribute(name)?;
        if attr.kind != AttributeKind::Categorical || !attr.is_predictive() {
            return None;
        }
        let code = category_code(attr, self.row(i))?;
        attr.dictionary.get(code).map(String::as_str)
    }

    pub fn count_where(&self, s: Option<u8>, y: Option<u8>) -> usize {
        self.sensitive
            .iter()
            .zip(&self.label)
            .filter(|(&si, &yi)| s.is_none_or(|v| v == si) && y.is_none_or(|v| v == yi))
            .count()
    }
}

fn category_code(attr: &AttributeSpec, row: &[f64]) -> Option<usize> {
    let cols = &row[attr.columns()];
    match attr.encoding {
        Encoding::Ordinal => {
            let v = cols[0];
            (v >= 0.0 && libm::trunc(v) == v).then_some(v as usize)
        }
        Encoding::OneHot => cols.iter().position(|&v| v == 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub seed: u64,
    pub folds: Option<usize>,
}

impl SplitPlan {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitPlan { train_fraction, seed, folds: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!(Parameter, "train fraction {} outside (0, 1)", self.train_fraction);
        }
        if matches!(self.folds, Some(k) if k < 2) {
            bail!(Parameter, "fold count must be at least 2");
        }
        Ok(())
    }

    /// Train-partition size: nearest integer, ties to even.
    pub fn train_size(&self, n: usize) -> usize {
        libm::rint(self.train_fraction * n as f64) as usize
    }
}

/// Random disjoint train/test partition; each partition keeps ascending row order.
pub fn split(data: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    plan.validate()?;
    let n = data.n_rows();
    let n_train = plan.train_size(n);
    if n_train == 0 || n_train == n {
        bail!(Parameter, "fraction {} of {} rows leaves an empty partition", plan.train_fraction, n);
    }
    let perm = rng::permutation(n, plan.seed);
    let (mut train, mut test) = (perm[..n_train].to_vec(), perm[n_train..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let note = format!("split fraction={} seed={}", plan.train_fraction, plan.seed);
    Ok((
        data.select_rows(&train).with_log(format!("{note} part=train rows={n_train}")),
        data.select_rows(&test).with_log(format!("{note} part=test rows={}", n - n_train)),
    ))
}

/// `k` (train, validate) pairs; the first `n mod k` folds get one extra row.
pub fn kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let n = data.n_rows();
    if k < 2 {
        bail!(Parameter, "k-fold needs k >= 2, got {k}");
    }
    if k > n {
        bail!(Parameter, "k = {k} exceeds {n} rows");
    }
    let perm = rng::permutation(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let len = base + usize::from(fold < extra);
        let mut validate = perm[start..start + len].to_vec();
        let mut train: Vec<usize> = perm[..start].iter().chain(&perm[start + len..]).copied().collect();
        validate.sort_unstable();
        train.sort_unstable();
        out.push((
            data.select_rows(&train).with_log(format!("kfold k={k} seed={seed} fold={fold} part=train")),
            data.select_rows(&validate).with_log(format!("kfold k={k} seed={seed} fold={fold} part=validate")),
        ));
        start += len;
    }
    Ok(out)
}

/// `n` rows drawn without replacement.
pub fn subsample_rows(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > data.n_rows() {
        bail!(Parameter, "subsample size {n} outside 1..={}", data.n_rows());
    }
    let mut idx = rng::permutation(data.n_rows(), seed);
    idx.truncate(n);
    idx.sort_unstable();
    Ok(data.select_rows(&idx).with_log(format!("subsample rows={n} seed={seed}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGain {
    pub name: String,
    /// Information gain in bits.
    pub gain: f64,
}

pub const DEFAULT_GAIN_BINS: usize = 10;

/// Predictive attributes ordered by decreasing information gain with respect to `Y`.
///
/// Numeric attributes are discretized into `bins` quantile bins (tied values share a
/// bin); categorical attributes use their dictionary codes. Ties keep schema order.
pub fn rank_by_information_gain(data: &Dataset, bins: usize) -> Result<Vec<AttributeGain>> {
    let n = data.n_rows();
    let positives = data.label().iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        bail!(Parameter, "information gain undefined for a constant label");
    }
    if bins == 0 {
        bail!(Parameter, "bin count must be positive");
    }
    let h_y = binary_entropy(positives, n);
    let mut gains = Vec::new();
    for attr in data.predictive_attributes() {
        let codes = attribute_codes(data, attr, bins);
        let levels = codes.iter().copied().max().map_or(0, |m| m + 1);
        let mut totals = alloc::vec![0usize; levels];
        let mut pos = alloc::vec![0usize; levels];
        for (c, &y) in codes.iter().zip(data.label()) {
            totals[*c] += 1;
            pos[*c] += usize::from(y == 1);
        }
        let conditional: f64 = totals
            .iter()
            .zip(&pos)
            .filter(|(&t, _)| t > 0)
            .map(|(&t, &p)| t as f64 / n as f64 * binary_entropy(p, t))
            .sum();
        gains.push(AttributeGain { name: attr.name.clone(), gain: (h_y - conditional).max(0.0) });
    }
    // stable sort keeps schema order among equal gains
    gains.sort_by(|a, b| b.gain.partial_cmp(&a.gain).unwrap_or(core::cmp::Ordering::Equal));
    Ok(gains)
}

fn attribute_codes(data: &Dataset, attr: &AttributeSpec, bins: usize) -> Vec<usize> {
    let n = data.n_rows();
    match attr.kind {
        AttributeKind::Categorical => (0..n)
            .map(|i| category_code(attr, data.row(i)).unwrap_or(attr.dictionary.len()))
            .collect(),
        AttributeKind::Numeric => {
            let values = data.column(attr.first_column);
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            values
                .iter()
                .map(|v| {
                    let below = sorted.partition_point(|x| x < v);
                    ((bins * below) / n).min(bins - 1)
                })
                .collect()
        }
    }
}

fn binary_entropy(positives: usize, total: usize) -> f64 {
    let p = positives as f64 / total as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * libm::log2(q)).sum()
}

/// Restricts the predictive attributes to `keep`; `S` and `Y` are always retained.
pub fn project_attributes<S: AsRef<str>>(data: &Dataset, keep: &[S]) -> Result<Dataset> {
    for name in keep {
        match data.attribute(name.as_ref()) {
            Some(a) if a.is_predictive() => {}
            Some(_) => bail!(Schema, "attribute '{}' is not predictive", name.as_ref()),
            None => bail!(Schema, "unknown attribute '{}'", name.as_ref()),
        }
    }
    let kept = |a: &AttributeSpec| !a.is_predictive() || keep.iter().any(|k| k.as_ref() == a.name);
    let schema: Vec<AttributeSpec> = data.schema.iter().filter(|a| kept(a)).cloned().collect();
    let columns: Vec<usize> = data
        .schema
        .iter()
        .filter(|a| a.is_predictive() && kept(a))
        .flat_map(|a| a.columns())
        .collect();
    let mut features = Vec::with_capacity(data.n_rows() * columns.len());
    for i in 0..data.n_rows() {
        let row = data.row(i);
        features.extend(columns.iter().map(|&j| row[j]));
    }
    let mut out = Dataset::new(schema, features, data.sensitive.clone(), data.label.clone())?;
    out.row_ids = data.row_ids.clone();
    out.provenance = data.provenance.clone();
    let names: Vec<&str> = keep.iter().map(AsRef::as_ref).collect();
    out.log(format!("project attributes=[{}]", names.join(",")));
    Ok(out)
}

/// Per-column standardization of numeric predictive attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// `(column, mean, standard deviation)`; zero deviations are stored as 1.
    pub columns: Vec<(usize, f64, f64)>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Standardizer {
        let n = data.n_rows() as f64;
        let columns = data
            .predictive_attributes()
            .filter(|a| a.kind == AttributeKind::Numeric)
            .map(|a| {
                let col = data.column(a.first_column);
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = libm::sqrt(var);
                (a.first_column, mean, if sd > 0.0 { sd } else { 1.0 })
            })
            .collect();
        Standardizer { columns }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let d = data.n_features();
        let mut features = data.features.clone();
        for &(j, mean, sd) in &self.columns {
            if j >= d {
                bail!(Schema, "standardizer column {j} outside {d} features");
            }
            for row in features.chunks_exact_mut(d) {
                row[j] = (row[j] - mean) / sd;
            }
        }
        Ok(data.with_features(features)?.with_log("standardize numeric attributes".to_string()))
    }
}
