//! Benchmark harness for fair binary classifiers: CSV ingestion, the evaluation
//! protocol, reports and the `fairbench` command line.

pub mod config;
pub mod error;
pub mod export;
pub mod harness;
pub mod load;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use harness::{
    evaluate, measure_overhead, run_pipeline, scalability_sweep, stability_suite, summarize, Approach, Axis,
    BenchmarkRecord, Evaluation, HarnessOptions, PipelineSpec, Stage,
};
pub use load::{load_csv, SchemaConfig};
pub use report::{emit_report, read_report, Format, ReportRow};
