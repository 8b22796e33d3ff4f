//! CSV ingestion driven by a TOML schema config, and CSV export of datasets.
//!
//! ```toml
//! sensitive = "sex"
//! label = "income"
//! privileged = ["Male"]
//! favorable = ">50K"
//! resolving = ["occupation", "hours-per-week"]
//! ignore = ["fnlwgt"]
//!
//! [attributes.education-num]
//! kind = "categorical"
//! encoding = "ordinal"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use fairbench_core::dataset::{AttributeKind, AttributeRole, AttributeSpec, Dataset, Encoding};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_quote() -> char {
    '"'
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "?".into(), "NA".into()]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeConfig {
    pub kind: Option<AttributeKind>,
    pub encoding: Option<Encoding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub sensitive: String,
    pub label: String,
    /// Sensitive values mapped to 1; everything else maps to 0.
    pub privileged: Vec<String>,
    pub favorable: String,
    /// When set, label values other than `favorable` and `unfavorable` are rejected.
    #[serde(default)]
    pub unfavorable: Option<String>,
    #[serde(default)]
    pub resolving: Vec<String>,
    #[serde(default = "default_quote")]
    pub quote: char,
    /// Cell values treated as missing; rows containing one are dropped.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeConfig>,
}

impl SchemaConfig {
    pub fn new(sensitive: &str, label: &str, privileged: &[&str], favorable: &str) -> Self {
        SchemaConfig {
            sensitive: sensitive.into(),
            label: label.into(),
            privileged: privileged.iter().map(|s| s.to_string()).collect(),
            favorable: favorable.into(),
            unfavorable: None,
            resolving: Vec::new(),
            quote: default_quote(),
            missing: default_missing(),
            ignore: Vec::new(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema config is always representable as TOML")
    }
}

fn schema_error(msg: String) -> Error {
    fairbench_core::Error::Schema(msg).into()
}

fn read_table(path: &Path, quote: char) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if !quote.is_ascii() {
        return Err(fairbench_core::Error::Parameter(format!("quote character {quote:?} is not ASCII")).into());
    }
    let mut reader = csv::ReaderBuilder::new()
        .quote(quote as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::csv(path, e),
        })?;
    let header: Vec<String> = reader.headers().map_err(|e| Error::csv(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows.push(record.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Loads and encodes a CSV file.
///
/// Predictive attributes are every column except the sensitive, label and ignored
/// ones. A column is numeric when all of its non-missing values parse as numbers,
/// unless the config says otherwise. Categorical dictionaries are the sorted
/// distinct values.
pub fn load_csv(path: &Path, config: &SchemaConfig) -> Result<Dataset> {
    let (header, rows) = read_table(path, config.quote)?;
    if header.is_empty() || rows.is_empty() {
        return Err(fairbench_core::Error::Ingestion(format!("{} has no data rows", path.display())).into());
    }
    let index = |name: &str| header.iter().position(|h| h == name);
    let Some(s_col) = index(&config.sensitive) else {
        return Err(schema_error(format!("sensitive column {:?} not found", config.sensitive)));
    };
    let Some(y_col) = index(&config.label) else {
        return Err(schema_error(format!("label column {:?} not found", config.label)));
    };
    for name in config.ignore.iter().chain(config.attributes.keys()).chain(&config.resolving) {
        if index(name).is_none() {
            return Err(schema_error(format!("configured column {name:?} not found")));
        }
    }
    let predictive: Vec<usize> = (0..header.len())
        .filter(|&j| j != s_col && j != y_col && !config.ignore.contains(&header[j]))
        .collect();
    for r in &config.resolving {
        if !predictive.iter().any(|&j| &header[j] == r) {
            return Err(schema_error(format!("resolving attribute {r:?} is not predictive")));
        }
    }

    let used: Vec<usize> = predictive.iter().copied().chain([s_col, y_col]).collect();
    let mut kept = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(schema_error(format!("row {} has {} fields, header has {}", line + 2, row.len(), header.len())));
        }
        if used.iter().all(|&j| !config.missing.contains(&row[j])) {
            kept.push(row);
        }
    }
    let dropped = rows.len() - kept.len();
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing values", path.display());
    }
    if kept.is_empty() {
        return Err(fairbench_core::Error::Ingestion(format!("{} has no complete rows", path.display())).into());
    }

    let label_values: BTreeSet<&str> = kept.iter().map(|r| r[y_col].as_str()).collect();
    match &config.unfavorable {
        Some(unfav) => {
            if let Some(bad) = label_values.iter().find(|v| **v != config.favorable && *v != unfav) {
                return Err(fairbench_core::Error::Encoding(format!("label value {bad:?} is neither favorable nor unfavorable")).into());
            }
        }
        None if label_values.len() > 2 => {
            return Err(fairbench_core::Error::Encoding(format!(
                "label {:?} has {} distinct values; a binary label is required",
                config.label,
                label_values.len()
            ))
            .into());
        }
        None => {}
    }

    let mut schema = Vec::new();
    let mut encoders: Vec<Encoder> = Vec::new();
    for &j in &predictive {
        let name = &header[j];
        let cfg = config.attributes.get(name).cloned().unwrap_or_default();
        let numeric = kept.iter().all(|r| r[j].parse::<f64>().is_ok());
        let kind = cfg.kind.unwrap_or(if numeric { AttributeKind::Numeric } else { AttributeKind::Categorical });
        let role = if config.resolving.contains(name) { AttributeRole::ResolvingCandidate } else { AttributeRole::Predictive };
        match kind {
            AttributeKind::Numeric => {
                if !numeric {
                    return Err(fairbench_core::Error::Encoding(format!("attribute {name:?} is declared numeric but has non-numeric values")).into());
                }
                schema.push(AttributeSpec::numeric(name.clone()).with_role(role));
                encoders.push(Encoder::Numeric(j));
            }
            AttributeKind::Categorical => {
                let dict: Vec<String> = kept.iter().map(|r| r[j].clone()).collect::<BTreeSet<_>>().into_iter().collect();
                let encoding = cfg.encoding.unwrap_or_default();
                schema.push(AttributeSpec::categorical(name.clone(), dict.clone(), encoding).with_role(role));
                encoders.push(Encoder::Categorical { column: j, dict, encoding });
            }
        }
    }
    let s_dict = vec!["unprivileged".to_string(), "privileged".to_string()];
    schema.push(AttributeSpec::target(config.sensitive.clone(), AttributeRole::Sensitive, s_dict));
    let y_dict = vec!["unfavorable".to_string(), config.favorable.clone()];
    schema.push(AttributeSpec::target(config.label.clone(), AttributeRole::Label, y_dict));

    let mut features = Vec::new();
    for row in &kept {
        for enc in &encoders {
            enc.push(row, &mut features);
        }
    }
    let s = kept.iter().map(|r| u8::from(config.privileged.contains(&r[s_col]))).collect();
    let y = kept.iter().map(|r| u8::from(r[y_col] == config.favorable)).collect();
    let mut data = Dataset::new(schema, features, s, y)?;
    data.log(format!("source={}", path.display()));
    data.log(format!("loaded rows={} dropped_missing={dropped}", data.n_rows()));
    Ok(data)
}

enum Encoder {
    Numeric(usize),
    Categorical { column: usize, dict: Vec<String>, encoding: Encoding },
}

impl Encoder {
    fn push(&self, row: &[String], out: &mut Vec<f64>) {
        match self {
            Encoder::Numeric(j) => out.push(row[*j].parse().expect("checked numeric")),
            Encoder::Categorical { column, dict, encoding } => {
                let code = dict.binary_search(&row[*column]).expect("dictionary built from these rows");
                match encoding {
                    Encoding::Ordinal => out.push(code as f64),
                    Encoding::OneHot => out.extend((0..dict.len()).map(|k| if k == code { 1.0 } else { 0.0 })),
                }
            }
        }
    }
}

/// Writes the encoded dataset as CSV, preceded by its provenance as `#` comment lines.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for line in data.provenance() {
        writeln!(file, "# {line}").map_err(|e| Error::io(path, e))?;
    }
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(&data.sensitive_attribute().name);
    header.push(&data.label_attribute().name);
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for i in 0..data.n_rows() {
        let mut record: Vec<String> = data.row(i).iter().map(f64::to_string).collect();
        record.push(data.sensitive()[i].to_string());
        record.push(data.label()[i].to_string());
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a dataset with decoded group and outcome values, readable by [`load_csv`]
/// with [`synthetic_schema`].
pub fn write_labelled_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(&data.sensitive_attribute().name);
    header.push(&data.label_attribute().name);
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let s_dict = &data.sensitive_attribute().dictionary;
    let y_dict = &data.label_attribute().dictionary;
    for i in 0..data.n_rows() {
        let mut record: Vec<String> = data.row(i).iter().map(f64::to_string).collect();
        let decode = |dict: &[String], v: u8| dict.get(v as usize).cloned().unwrap_or_else(|| v.to_string());
        record.push(decode(s_dict, data.sensitive()[i]));
        record.push(decode(y_dict, data.label()[i]));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Schema config matching [`write_labelled_csv`] output of synthetic data.
pub fn synthetic_schema(data: &Dataset) -> SchemaConfig {
    let mut cfg = SchemaConfig::new(&data.sensitive_attribute().name, &data.label_attribute().name, &["privileged"], "favorable");
    cfg.unfavorable = Some("unfavorable".into());
    cfg.resolving = data.resolving_candidates();
    cfg
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(PathBuf::from(path), e))
}
