//! Flat report rows and their CSV / JSON Lines serialization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{BenchmarkRecord, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

/// One benchmark record, flattened into a fixed column order.
///
/// An infinite DI is written as an empty `di` with `di_infinite = true`, since
/// neither format carries infinities portably.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub stage: Stage,
    pub pipeline_seed: u64,
    pub seed: u64,
    pub rows: usize,
    pub attributes: usize,
    pub fold: Option<usize>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub di: Option<f64>,
    pub di_infinite: bool,
    pub tprb: Option<f64>,
    pub tnrb: Option<f64>,
    pub cd: Option<f64>,
    pub crd: Option<f64>,
    pub di_star: Option<f64>,
    pub tprb_norm: Option<f64>,
    pub tnrb_norm: Option<f64>,
    pub cd_norm: Option<f64>,
    pub crd_norm: Option<f64>,
    pub reverse_di: bool,
    pub reverse_tprb: bool,
    pub reverse_tnrb: bool,
    pub reverse_crd: bool,
    pub cv_accuracy: Option<f64>,
    pub time_pre: f64,
    pub time_fit: f64,
    pub time_post: f64,
    pub time_predict: f64,
    pub wall_clock_total: f64,
    pub wall_clock_overhead: Option<f64>,
}

impl From<&BenchmarkRecord> for ReportRow {
    fn from(r: &BenchmarkRecord) -> Self {
        let raw = &r.fairness.raw;
        let norm = &r.fairness.normalized;
        let rev = &r.fairness.reverse;
        let di_infinite = raw.di.is_some_and(f64::is_infinite);
        ReportRow {
            approach: r.approach_id.clone(),
            stage: r.stage,
            pipeline_seed: r.pipeline.seed,
            seed: r.seed,
            rows: r.slice.rows,
            attributes: r.slice.attributes,
            fold: r.slice.fold,
            accuracy: r.correctness.accuracy,
            precision: r.correctness.precision,
            recall: r.correctness.recall,
            f1: r.correctness.f1,
            di: raw.di.filter(|d| d.is_finite()),
            di_infinite,
            tprb: raw.tprb,
            tnrb: raw.tnrb,
            cd: raw.cd,
            crd: raw.crd,
            di_star: norm.di_star,
            tprb_norm: norm.tprb,
            tnrb_norm: norm.tnrb,
            cd_norm: norm.cd,
            crd_norm: norm.crd,
            reverse_di: rev.di,
            reverse_tprb: rev.tprb,
            reverse_tnrb: rev.tnrb,
            reverse_crd: rev.crd,
            cv_accuracy: r.cv_accuracy,
            time_pre: r.timings.pre,
            time_fit: r.timings.fit,
            time_post: r.timings.post,
            time_predict: r.timings.predict,
            wall_clock_total: r.wall_clock_total,
            wall_clock_overhead: r.wall_clock_overhead,
        }
    }
}

/// Writes any flat serializable rows; CSV gets a header line.
pub fn write_rows<T: Serialize>(rows: &[T], format: Format, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => {
            let mut writer = csv::Writer::from_writer(BufWriter::new(file));
            for row in rows {
                writer.serialize(row).map_err(|e| Error::csv(path, e))?;
            }
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
        Format::Jsonl => {
            let mut out = BufWriter::new(file);
            for row in rows {
                serde_json::to_writer(&mut out, row)?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            out.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path, format: Format) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .map(|r| r.map_err(|e| Error::csv(path, e)))
            .collect(),
        Format::Jsonl => {
            let mut rows = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if !line.trim().is_empty() {
                    rows.push(serde_json::from_str(&line)?);
                }
            }
            Ok(rows)
        }
    }
}

/// One row per record in a stable column order.
pub fn emit_report(records: &[BenchmarkRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(fairbench_core::Error::Input("no records to report".into()).into());
    }
    let rows: Vec<ReportRow> = records.iter().map(ReportRow::from).collect();
    write_rows(&rows, format, path)
}

pub fn read_report(path: &Path, format: Format) -> Result<Vec<ReportRow>> {
    read_rows(path, format)
}
