use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairbench::harness::{stability_suite, CellFailure};
use fairbench::load::{synthetic_schema, write_labelled_csv, write_text};
use fairbench::report::{read_rows, write_rows};
use fairbench::{emit_report, evaluate, load_csv, scalability_sweep, Axis, ExperimentConfig, Format, ReportRow, Result, SchemaConfig};
use fairbench_core::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "fairbench", version, about = "Benchmark fair binary classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every configured pipeline on one train/test split.
    Evaluate(Common),
    /// Repeat the evaluation over growing row counts or attribute counts.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<usize>,
    },
    /// Summarize score variance over repeated random splits.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        train_fraction: f64,
        /// Also write the per-repeat records here.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Convert a report between CSV and JSON Lines.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Generate the synthetic biased benchmark as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Write a matching schema config here.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 6)]
        features: usize,
        #[arg(long, default_value_t = 0.6)]
        rate_privileged: f64,
        #[arg(long, default_value_t = 0.3)]
        rate_unprivileged: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Experiment config (TOML); all approaches run when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output file extension.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn load(&self) -> Result<(fairbench_core::Dataset, ExperimentConfig)> {
        let schema = SchemaConfig::from_toml_file(&self.schema)?;
        let data = load_csv(&self.data, &schema)?;
        let mut cfg = match &self.spec {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((data, cfg))
    }

    fn format(&self) -> Format {
        self.format.unwrap_or_else(|| Format::from_path(&self.out))
    }
}

/// Reports failed cells on stderr; returns whether any failed.
fn report_failures(failures: &[CellFailure]) -> bool {
    for f in failures {
        eprintln!("failed: {} (rows={}, seed={}): {}", f.approach_id, f.slice.rows, f.seed, f.message);
    }
    !failures.is_empty()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Evaluate(common) => {
            let (data, cfg) = common.load()?;
            let eval = evaluate(&cfg.specs(), &data, &cfg.plan(), &cfg.harness_options())?;
            emit_report(&eval.records, common.format(), &common.out)?;
            Ok(report_failures(&eval.failures))
        }
        Command::Scale { common, axis, points } => {
            let (data, cfg) = common.load()?;
            let eval = scalability_sweep(&cfg.specs(), &data, axis, &points, &cfg.plan(), &cfg.harness_options())?;
            emit_report(&eval.records, common.format(), &common.out)?;
            Ok(report_failures(&eval.failures))
        }
        Command::Stability { common, repeats, train_fraction, records } => {
            let (data, cfg) = common.load()?;
            let result = stability_suite(&cfg.specs(), &data, repeats, train_fraction, cfg.seed, &cfg.harness_options())?;
            write_rows(&result.summary, common.format(), &common.out)?;
            if let Some(path) = records {
                emit_report(&result.evaluation.records, Format::from_path(&path), &path)?;
            }
            Ok(report_failures(&result.evaluation.failures))
        }
        Command::Report { input, out, format } => {
            let rows: Vec<ReportRow> = read_rows(&input, Format::from_path(&input))?;
            if rows.is_empty() {
                return Err(fairbench_core::Error::Input(format!("{} has no records", input.display())).into());
            }
            write_rows(&rows, format.unwrap_or_else(|| Format::from_path(&out)), &out)?;
            Ok(false)
        }
        Command::Synth { out, schema, rows, features, rate_privileged, rate_unprivileged, seed } => {
            let cfg = SynthConfig {
                rows,
                features,
                positive_rate_privileged: rate_privileged,
                positive_rate_unprivileged: rate_unprivileged,
                seed,
                ..SynthConfig::default()
            };
            let data = generate(&cfg)?;
            write_labelled_csv(&data, &out)?;
            if let Some(path) = schema {
                write_text(Path::new(&path), &synthetic_schema(&data).to_toml())?;
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
