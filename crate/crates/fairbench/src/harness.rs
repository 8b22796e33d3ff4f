//! Pipeline assembly and the evaluation protocol: paired correctness/fairness
//! scoring, runtime overhead against ORIG, scalability sweeps and stability runs.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use fairbench_core::dataset::{self, project_attributes, rank_by_information_gain, subsample_rows, Standardizer, DEFAULT_GAIN_BINS};
use fairbench_core::inprocess::{fit_zafar_di_acc, fit_zafar_di_fair, DEFAULT_ACCURACY_SLACK, DEFAULT_COVARIANCE_BOUND};
use fairbench_core::metrics::{
    causal_discrimination, causal_risk_difference, confusion, correctness_metrics, disparate_impact, propensity_weights,
    rate_balances, Classifier, Correctness, Determinism, FairnessReport, PropensityWeights, RawFairness,
};
use fairbench_core::model::{fit_logistic, predict_label, predict_proba, TrainOptions, TrainedModel};
use fairbench_core::postprocess::{
    hardt_apply_keyed, hardt_fit, pleiss_apply_keyed, pleiss_fit, reject_option_apply, reject_option_tune,
    CalibrationPolicy, CriticalRegion, FairnessTarget, MixingPolicy, DEFAULT_ROC_GRID,
};
use fairbench_core::preprocess::{reweigh, weighted_resample, RepairMap, RepairParams};
use fairbench_core::rng::derive_seed;
use fairbench_core::{Dataset, SplitPlan};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How KAM-RW hands its weights to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweighRoute {
    /// Weighted resampling of the training set, then an unweighted fit.
    #[default]
    Resample,
    /// Weighted likelihood.
    Weighted,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    DEFAULT_ACCURACY_SLACK
}
fn default_grid() -> Vec<f64> {
    DEFAULT_ROC_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "approach", rename_all = "snake_case")]
pub enum Approach {
    Orig,
    KamRw {
        #[serde(default)]
        route: ReweighRoute,
    },
    Feld {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    ZafarDiFair {
        #[serde(default)]
        c: f64,
    },
    ZafarDiAcc {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    KamRoc {
        #[serde(default = "default_grid")]
        grid: Vec<f64>,
    },
    Hardt,
    Pleiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    None,
    Pre,
    In,
    Post,
}

impl Approach {
    pub fn stage(&self) -> Stage {
        match self {
            Approach::Orig => Stage::None,
            Approach::KamRw { .. } | Approach::Feld { .. } => Stage::Pre,
            Approach::ZafarDiFair { .. } | Approach::ZafarDiAcc { .. } => Stage::In,
            Approach::KamRoc { .. } | Approach::Hardt | Approach::Pleiss => Stage::Post,
        }
    }

    /// Short identifier with the distinguishing hyperparameter, e.g. `feld(0.6)`.
    pub fn id(&self) -> String {
        match self {
            Approach::Orig => "orig".into(),
            Approach::KamRw { route: ReweighRoute::Resample } => "kam_rw".into(),
            Approach::KamRw { route: ReweighRoute::Weighted } => "kam_rw(weighted)".into(),
            Approach::Feld { lambda } => format!("feld({lambda})"),
            Approach::ZafarDiFair { c } => format!("zafar_di_fair({c})"),
            Approach::ZafarDiAcc { gamma } => format!("zafar_di_acc({gamma})"),
            Approach::KamRoc { .. } => "kam_roc".into(),
            Approach::Hardt => "hardt".into(),
            Approach::Pleiss => "pleiss".into(),
        }
    }

    pub fn validate(&self) -> fairbench_core::Result<()> {
        use fairbench_core::Error::Parameter;
        match self {
            Approach::Feld { lambda } if !(0.0..=1.0).contains(lambda) => Err(Parameter(format!("lambda {lambda} outside [0, 1]"))),
            Approach::ZafarDiFair { c } if !(*c >= 0.0) => Err(Parameter(format!("covariance bound {c} is negative"))),
            Approach::ZafarDiAcc { gamma } if !(*gamma >= 0.0) => Err(Parameter(format!("accuracy slack {gamma} is negative"))),
            Approach::KamRoc { grid } => {
                if grid.is_empty() {
                    return Err(Parameter("reject option grid is empty".into()));
                }
                grid.iter().try_for_each(|&t| CriticalRegion::new(t).map(|_| ()))
            }
            _ => Ok(()),
        }
    }

    /// Every approach with default hyperparameters, plus FELD at partial repair.
    pub fn all() -> Vec<Approach> {
        vec![
            Approach::Orig,
            Approach::KamRw { route: ReweighRoute::Resample },
            Approach::Feld { lambda: 1.0 },
            Approach::Feld { lambda: 0.6 },
            Approach::ZafarDiFair { c: DEFAULT_COVARIANCE_BOUND },
            Approach::ZafarDiAcc { gamma: DEFAULT_ACCURACY_SLACK },
            Approach::KamRoc { grid: default_grid() },
            Approach::Hardt,
            Approach::Pleiss,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    #[serde(flatten)]
    pub approach: Approach,
    /// Seeds the approach's own randomness (resampling, calibration split, mixing draws).
    #[serde(default)]
    pub seed: u64,
}

impl PipelineSpec {
    pub fn new(approach: Approach, seed: u64) -> Self {
        PipelineSpec { approach, seed }
    }

    pub fn orig(seed: u64) -> Self {
        PipelineSpec::new(Approach::Orig, seed)
    }

    pub fn id(&self) -> String {
        self.approach.id()
    }

    pub fn stage(&self) -> Stage {
        self.approach.stage()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessOptions {
    pub train: TrainOptions,
    pub cd_confidence: f64,
    pub cd_error: f64,
    /// Folds for the cross-validated accuracy diagnostic; 0 disables it.
    pub cv_folds: usize,
    /// Timed runs per cell; the median total is reported.
    pub timing_repeats: usize,
    /// Resolving attributes for CRD; defaults to the dataset's resolving candidates.
    pub resolving: Option<Vec<String>>,
    /// Share of the training split used to fit post-processing policies.
    pub calibration_fraction: f64,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            train: TrainOptions::default(),
            cd_confidence: 0.99,
            cd_error: 0.01,
            cv_folds: 3,
            timing_repeats: 1,
            resolving: None,
            calibration_fraction: 0.5,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub pre: f64,
    pub fit: f64,
    pub post: f64,
    pub predict: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PostStep {
    None,
    RejectOption(CriticalRegion),
    Mixing { policy: MixingPolicy, seed: u64 },
    Calibration { policy: CalibrationPolicy, seed: u64 },
}

/// A fitted pipeline: optional input repair, the classifier, and a post step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePredictor {
    pub input_repair: Option<RepairMap>,
    pub model: TrainedModel,
    pub post: PostStep,
}

impl Classifier for PipelinePredictor {
    fn predict(&self, data: &Dataset) -> fairbench_core::Result<Vec<u8>> {
        let repaired;
        let input = match &self.input_repair {
            Some(map) => {
                repaired = map.apply(data)?;
                &repaired
            }
            None => data,
        };
        match &self.post {
            PostStep::None => predict_label(&self.model, input, 0.5),
            PostStep::RejectOption(region) => reject_option_apply(&predict_proba(&self.model, input)?, input.sensitive(), region),
            PostStep::Mixing { policy, seed } => {
                let preds = predict_label(&self.model, input, 0.5)?;
                hardt_apply_keyed(policy, &preds, input.sensitive(), input.row_ids(), *seed)
            }
            PostStep::Calibration { policy, seed } => {
                let preds = predict_label(&self.model, input, 0.5)?;
                pleiss_apply_keyed(policy, &preds, input.sensitive(), input.row_ids(), *seed)
            }
        }
    }

    fn determinism(&self) -> Determinism {
        match self.post {
            PostStep::Mixing { seed, .. } | PostStep::Calibration { seed, .. } => Determinism::FrozenSeed(seed),
            _ => Determinism::Deterministic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub predictions: Vec<u8>,
    pub predictor: PipelinePredictor,
    pub timings: StageTimings,
}

static TIMING_TOKEN: Mutex<()> = Mutex::new(());

/// Serializes timed sections so that measurements never overlap.
pub fn timing_token() -> MutexGuard<'static, ()> {
    TIMING_TOKEN.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn stage_err<'a>(spec: &'a PipelineSpec, stage: &'static str) -> impl Fn(fairbench_core::Error) -> Error + 'a {
    move |source| Error::Stage { approach: spec.id(), stage, source }
}

fn seconds_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

const TAG_RESAMPLE: u64 = 11;
const TAG_CALIBRATION: u64 = 12;
const TAG_MIXING: u64 = 13;

/// Fits the pipeline on `train` and predicts `test`.
///
/// The caller is responsible for any feature scaling; both datasets must share a
/// schema. Holds the timing token for the whole run.
pub fn run_pipeline(spec: &PipelineSpec, train: &Dataset, test: &Dataset, opts: &HarnessOptions) -> Result<PipelineRun> {
    spec.approach.validate().map_err(stage_err(spec, "config"))?;
    if train.schema() != test.schema() {
        return Err(fairbench_core::Error::Schema("train and test schemas differ".into()).into());
    }
    let train_opts = TrainOptions { seed: spec.seed, ..opts.train.clone() };
    let _token = timing_token();
    let mut t = StageTimings::default();
    let start = Instant::now();

    let clock = Instant::now();
    let mut input_repair = None;
    let resampled;
    let mut weights = None;
    let fit_data = match &spec.approach {
        Approach::KamRw { route } => {
            let (_, w) = reweigh(train).map_err(stage_err(spec, "pre"))?;
            match route {
                ReweighRoute::Resample => {
                    resampled = weighted_resample(train, &w, train.n_rows(), derive_seed(spec.seed, TAG_RESAMPLE))
                        .map_err(stage_err(spec, "pre"))?;
                    &resampled
                }
                ReweighRoute::Weighted => {
                    weights = Some(w);
                    train
                }
            }
        }
        Approach::Feld { lambda } => {
            let params = RepairParams::new(*lambda);
            resampled = RepairMap::fit(train, &params)
                .and_then(|m| m.apply(train))
                .map_err(stage_err(spec, "pre"))?;
            input_repair = Some(RepairMap::fit(test, &params).map_err(stage_err(spec, "pre"))?);
            &resampled
        }
        _ => train,
    };
    t.pre = seconds_since(clock);

    let clock = Instant::now();
    let model = match &spec.approach {
        Approach::ZafarDiFair { c } => fit_zafar_di_fair(fit_data, *c, &train_opts).map(|f| f.model),
        Approach::ZafarDiAcc { gamma } => fit_zafar_di_acc(fit_data, *gamma, &train_opts).map(|f| f.model),
        _ => fit_logistic(fit_data, weights.as_deref(), &train_opts),
    }
    .map_err(stage_err(spec, "fit"))?;
    t.fit = seconds_since(clock);

    let clock = Instant::now();
    let post = match &spec.approach {
        Approach::KamRoc { .. } | Approach::Hardt | Approach::Pleiss => {
            let plan = SplitPlan::new(opts.calibration_fraction, derive_seed(spec.seed, TAG_CALIBRATION));
            let (_, cal) = dataset::split(train, &plan).map_err(stage_err(spec, "post"))?;
            fit_post_step(&spec.approach, &model, &cal, derive_seed(spec.seed, TAG_MIXING)).map_err(stage_err(spec, "post"))?
        }
        _ => PostStep::None,
    };
    t.post = seconds_since(clock);

    let predictor = PipelinePredictor { input_repair, model, post };
    let clock = Instant::now();
    let predictions = predictor.predict(test).map_err(stage_err(spec, "predict"))?;
    t.predict = seconds_since(clock);
    t.total = seconds_since(start);
    Ok(PipelineRun { predictions, predictor, timings: t })
}

fn fit_post_step(approach: &Approach, model: &TrainedModel, cal: &Dataset, seed: u64) -> fairbench_core::Result<PostStep> {
    Ok(match approach {
        Approach::KamRoc { grid } => {
            let probs = predict_proba(model, cal)?;
            PostStep::RejectOption(reject_option_tune(&probs, cal.sensitive(), cal.label(), FairnessTarget::DiStar, grid)?)
        }
        Approach::Hardt => {
            let preds = predict_label(model, cal, 0.5)?;
            PostStep::Mixing { policy: hardt_fit(cal.label(), &preds, cal.sensitive())?, seed }
        }
        Approach::Pleiss => {
            let probs = predict_proba(model, cal)?;
            PostStep::Calibration { policy: pleiss_fit(cal.label(), &probs, cal.sensitive())?, seed }
        }
        _ => PostStep::None,
    })
}

/// Runs `f` `repeats` times and returns the first result with the median wall-clock seconds.
pub fn median_wall_clock<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut first = None;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = f()?;
        times.push(seconds_since(start));
        first.get_or_insert(out);
    }
    Ok((first.expect("at least one run"), median(&mut times)))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSlice {
    pub rows: usize,
    /// Predictive attributes (before encoding).
    pub attributes: usize,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub approach_id: String,
    pub stage: Stage,
    pub pipeline: PipelineSpec,
    /// Split seed; records pair only when slice and seed agree.
    pub seed: u64,
    pub slice: DatasetSlice,
    pub correctness: Correctness,
    pub fairness: FairnessReport,
    pub cv_accuracy: Option<f64>,
    /// Stage breakdown of the median run.
    pub timings: StageTimings,
    pub wall_clock_total: f64,
    pub wall_clock_overhead: Option<f64>,
}

/// `record.total − orig.total`; may be negative.
pub fn measure_overhead(spec: &PipelineSpec, orig: &BenchmarkRecord, record: &BenchmarkRecord) -> Result<f64> {
    if orig.pipeline.approach != Approach::Orig {
        return Err(Error::Pairing(format!("{} is not an ORIG record", orig.approach_id)));
    }
    if record.pipeline.approach != spec.approach {
        return Err(Error::Pairing(format!("record {} does not belong to {}", record.approach_id, spec.id())));
    }
    if orig.slice != record.slice || orig.seed != record.seed {
        return Err(Error::Pairing(format!(
            "{} ran on slice {:?} seed {}, ORIG on slice {:?} seed {}",
            record.approach_id, record.slice, record.seed, orig.slice, orig.seed
        )));
    }
    Ok(record.wall_clock_total - orig.wall_clock_total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub approach_id: String,
    pub slice: DatasetSlice,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub records: Vec<BenchmarkRecord>,
    pub failures: Vec<CellFailure>,
}

impl Evaluation {
    fn extend(&mut self, other: Evaluation) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

struct Prepared {
    train: Dataset,
    test: Dataset,
    weights: Option<PropensityWeights>,
    slice: DatasetSlice,
    seed: u64,
}

fn prepare(data: &Dataset, plan: &SplitPlan, opts: &HarnessOptions) -> Result<Prepared> {
    let (train, test) = dataset::split(data, plan)?;
    let scaler = Standardizer::fit(&train);
    let (train, test) = (scaler.apply(&train)?, scaler.apply(&test)?);
    let resolving = opts.resolving.clone().unwrap_or_else(|| data.resolving_candidates());
    let weights = if resolving.is_empty() {
        log::warn!("no resolving attributes; CRD is left undefined");
        None
    } else {
        Some(propensity_weights(&test, &resolving, &opts.train)?)
    };
    let slice = DatasetSlice { rows: data.n_rows(), attributes: data.predictive_attributes().count(), fold: None };
    Ok(Prepared { train, test, weights, slice, seed: plan.seed })
}

fn score_cell(spec: &PipelineSpec, p: &Prepared, opts: &HarnessOptions) -> Result<BenchmarkRecord> {
    let (run, total) = median_wall_clock(opts.timing_repeats, || run_pipeline(spec, &p.train, &p.test, opts))?;
    let test = &p.test;
    let correctness = correctness_metrics(&confusion(test.label(), &run.predictions)?);
    let rb = rate_balances(test.sensitive(), test.label(), &run.predictions)?;
    let cd_seed = derive_seed(p.seed, 21);
    let raw = RawFairness {
        di: disparate_impact(test.sensitive(), &run.predictions)?,
        tprb: rb.tprb,
        tnrb: rb.tnrb,
        cd: Some(causal_discrimination(&run.predictor, test, opts.cd_confidence, opts.cd_error, cd_seed)?),
        crd: match &p.weights {
            Some(w) => causal_risk_difference(test.sensitive(), &run.predictions, w)?,
            None => None,
        },
    };
    let cv_accuracy = cross_validated_accuracy(spec, &p.train, p.seed, opts)?;
    Ok(BenchmarkRecord {
        approach_id: spec.id(),
        stage: spec.stage(),
        pipeline: spec.clone(),
        seed: p.seed,
        slice: p.slice,
        correctness,
        fairness: FairnessReport::new(raw),
        cv_accuracy,
        timings: run.timings,
        wall_clock_total: total,
        wall_clock_overhead: None,
    })
}

fn cross_validated_accuracy(spec: &PipelineSpec, train: &Dataset, seed: u64, opts: &HarnessOptions) -> Result<Option<f64>> {
    if opts.cv_folds == 0 {
        return Ok(None);
    }
    let mut sum = 0.0;
    let folds = dataset::kfold(train, opts.cv_folds, derive_seed(seed, 22))?;
    for (fit, validate) in &folds {
        let run = run_pipeline(spec, fit, validate, opts)?;
        let acc = correctness_metrics(&confusion(validate.label(), &run.predictions)?).accuracy;
        sum += acc.unwrap_or(0.0);
    }
    Ok(Some(sum / folds.len() as f64))
}

/// Splits per `plan`, standardizes numeric attributes on the training split, and
/// scores every spec on the test split next to a paired ORIG run.
///
/// A failing spec is recorded in [`Evaluation::failures`] and the run continues; a
/// failing ORIG run or an invalid plan is an error.
pub fn evaluate(specs: &[PipelineSpec], data: &Dataset, plan: &SplitPlan, opts: &HarnessOptions) -> Result<Evaluation> {
    plan.validate()?;
    let prepared = prepare(data, plan, opts)?;
    evaluate_prepared(specs, &prepared, opts)
}

fn evaluate_prepared(specs: &[PipelineSpec], p: &Prepared, opts: &HarnessOptions) -> Result<Evaluation> {
    let orig_spec = PipelineSpec::orig(p.seed);
    let orig = score_cell(&orig_spec, p, opts)?;
    let mut out = Evaluation::default();
    for spec in specs {
        let scored = match spec.approach {
            Approach::Orig => Ok(BenchmarkRecord { pipeline: spec.clone(), ..orig.clone() }),
            _ => score_cell(spec, p, opts),
        };
        match scored {
            Ok(mut record) => {
                let paired = BenchmarkRecord { pipeline: orig_spec.clone(), ..orig.clone() };
                record.wall_clock_overhead = Some(measure_overhead(spec, &paired, &record)?);
                out.records.push(record);
            }
            Err(e) => {
                log::error!("{} failed: {e}", spec.id());
                out.failures.push(CellFailure { approach_id: spec.id(), slice: p.slice, seed: p.seed, message: e.to_string() });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Attributes,
}

/// Evaluates every spec at each point of `axis`.
///
/// Rows are subsampled without replacement; attributes keep the top `k` by
/// information gain, ranked once on the full data.
pub fn scalability_sweep(
    specs: &[PipelineSpec],
    data: &Dataset,
    axis: Axis,
    points: &[usize],
    plan: &SplitPlan,
    opts: &HarnessOptions,
) -> Result<Evaluation> {
    plan.validate()?;
    let limit = match axis {
        Axis::Rows => data.n_rows(),
        Axis::Attributes => data.predictive_attributes().count(),
    };
    if points.is_empty() {
        return Err(fairbench_core::Error::Parameter("no sweep points".into()).into());
    }
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(fairbench_core::Error::Parameter("sweep points must be strictly ascending".into()).into());
    }
    if let Some(&bad) = points.iter().find(|&&p| p == 0 || p > limit) {
        return Err(fairbench_core::Error::Parameter(format!("sweep point {bad} outside 1..={limit}")).into());
    }
    let ranking = match axis {
        Axis::Attributes => rank_by_information_gain(data, DEFAULT_GAIN_BINS)?.into_iter().map(|g| g.name).collect(),
        Axis::Rows => Vec::new(),
    };
    let mut out = Evaluation::default();
    for &point in points {
        let slice = match axis {
            Axis::Rows if point == data.n_rows() => data.clone(),
            Axis::Rows => subsample_rows(data, point, derive_seed(plan.seed, point as u64))?,
            Axis::Attributes => project_attributes(data, &ranking[..point])?,
        };
        log::info!("sweep {axis:?}={point}");
        out.extend(evaluate(specs, &slice, plan, opts)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample variance (divisor `n − 1`).
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample variance, min and max; `None` for fewer than two values.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    // Welford's update; exact for constant input.
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let variance = m2 / (n - 1) as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Summary { count: n, mean, variance, min, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub approach_id: String,
    pub metric: String,
    /// Repeats where the metric was defined.
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub evaluation: Evaluation,
    pub summary: Vec<StabilityRow>,
}

/// Metrics summarized by [`stability_suite`], in report order.
pub const STABILITY_METRICS: [&str; 9] = ["accuracy", "precision", "recall", "f1", "di_star", "tprb", "tnrb", "cd", "crd"];

fn metric(record: &BenchmarkRecord, name: &str) -> Option<f64> {
    let c = &record.correctness;
    let n = &record.fairness.normalized;
    match name {
        "accuracy" => c.accuracy,
        "precision" => c.precision,
        "recall" => c.recall,
        "f1" => c.f1,
        "di_star" => n.di_star,
        "tprb" => n.tprb,
        "tnrb" => n.tnrb,
        "cd" => n.cd,
        "crd" => n.crd,
        _ => None,
    }
}

/// Repeats [`evaluate`] over `repeats` random partitions (seed `seed + r`, fold id
/// `r`) and summarizes each normalized metric per spec.
pub fn stability_suite(
    specs: &[PipelineSpec],
    data: &Dataset,
    repeats: usize,
    train_fraction: f64,
    seed: u64,
    opts: &HarnessOptions,
) -> Result<Stability> {
    if repeats < 2 {
        return Err(fairbench_core::Error::Parameter(format!("stability needs at least 2 repeats, got {repeats}")).into());
    }
    let mut out = Stability::default();
    for r in 0..repeats {
        let plan = SplitPlan::new(train_fraction, seed.wrapping_add(r as u64));
        let mut run = evaluate(specs, data, &plan, opts)?;
        for record in &mut run.records {
            record.slice.fold = Some(r);
        }
        for failure in &mut run.failures {
            failure.slice.fold = Some(r);
        }
        out.evaluation.extend(run);
    }
    out.summary = summarize_records(specs, &out.evaluation.records);
    Ok(out)
}

/// Per spec (in `specs` order) and metric summaries over matching records.
pub fn summarize_records(specs: &[PipelineSpec], records: &[BenchmarkRecord]) -> Vec<StabilityRow> {
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for spec in specs {
        if seen.contains(&&spec.approach) {
            continue;
        }
        seen.push(&spec.approach);
        let mine: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.pipeline.approach == spec.approach).collect();
        for name in STABILITY_METRICS {
            let values: Vec<f64> = mine.iter().filter_map(|r| metric(r, name)).collect();
            let s = summarize(&values);
            rows.push(StabilityRow {
                approach_id: spec.id(),
                metric: name.into(),
                count: values.len(),
                mean: s.map(|s| s.mean),
                variance: s.map(|s| s.variance),
                min: s.map(|s| s.min),
                max: s.map(|s| s.max),
            });
        }
    }
    rows
}
