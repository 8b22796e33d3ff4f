use std::time::Duration;

use fairbench::config::ExperimentConfig;
use fairbench::export::{load_json, save_json};
use fairbench::harness::{
    median_wall_clock, summarize_records, timing_token, HarnessOptions, PipelinePredictor, StabilityRow, STABILITY_METRICS,
};
use fairbench::{
    evaluate, measure_overhead, run_pipeline, scalability_sweep, stability_suite, summarize, Approach, Axis, BenchmarkRecord,
    Error, PipelineSpec, Stage,
};
use fairbench_core::dataset::{split, Standardizer};
use fairbench_core::metrics::Classifier;
use fairbench_core::model::{fit_logistic, predict_label};
use fairbench_core::synth::{generate, SynthConfig};
use fairbench_core::{Dataset, SplitPlan};

fn synthetic(rows: usize, seed: u64) -> Dataset {
    generate(&SynthConfig::with_rows(rows, seed)).unwrap()
}

fn quick() -> HarnessOptions {
    HarnessOptions { cv_folds: 0, ..HarnessOptions::default() }
}

fn specs(approaches: impl IntoIterator<Item = Approach>) -> Vec<PipelineSpec> {
    approaches.into_iter().map(|a| PipelineSpec::new(a, 5)).collect()
}

fn without_clock(mut r: BenchmarkRecord) -> BenchmarkRecord {
    r.timings = Default::default();
    r.wall_clock_total = 0.0;
    r.wall_clock_overhead = None;
    r
}

#[test]
fn orig_pipeline_is_fit_then_predict() {
    let (train, test) = split(&synthetic(2000, 1), &SplitPlan::new(0.7, 2)).unwrap();
    let opts = quick();
    let run = run_pipeline(&PipelineSpec::orig(9), &train, &test, &opts).unwrap();
    let model = fit_logistic(&train, None, &fairbench_core::TrainOptions { seed: 9, ..opts.train.clone() }).unwrap();
    assert_eq!(run.predictions, predict_label(&model, &test, 0.5).unwrap());
    assert_eq!(run.predictor.model, model);
    assert!(run.timings.total >= run.timings.fit);
}

#[test]
fn stage_follows_approach() {
    assert_eq!(PipelineSpec::orig(0).stage(), Stage::None);
    assert_eq!(Approach::Feld { lambda: 0.6 }.stage(), Stage::Pre);
    assert_eq!(Approach::ZafarDiAcc { gamma: 0.1 }.stage(), Stage::In);
    assert_eq!(Approach::Pleiss.stage(), Stage::Post);
    assert_eq!(Approach::Feld { lambda: 0.6 }.id(), "feld(0.6)");
}

#[test]
fn pipeline_spec_parses_from_toml() {
    let text = r#"
        seed = 4
        cv_folds = 0

        [train]
        max_epochs = 100

        [[pipelines]]
        approach = "feld"
        lambda = 0.6
        seed = 2

        [[pipelines]]
        approach = "kam_rw"
        route = "weighted"

        [[pipelines]]
        approach = "kam_roc"
    "#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::from_toml_file(&path).unwrap();
    assert_eq!(cfg.train.max_epochs, 100);
    assert_eq!(cfg.train.learning_rate, 0.1);
    assert_eq!(cfg.harness_options().cv_folds, 0);
    let ids: Vec<String> = cfg.specs().iter().map(PipelineSpec::id).collect();
    assert_eq!(ids, ["feld(0.6)", "kam_rw(weighted)", "kam_roc"]);
    assert_eq!(cfg.specs()[0].seed, 2);

    std::fs::write(&path, "[[pipelines]]\napproach = \"feld\"\nlambda = 2.0\n").unwrap();
    assert_eq!(ExperimentConfig::from_toml_file(&path).unwrap_err().exit_code(), 12);
    assert_eq!(ExperimentConfig::default().specs().len(), Approach::all().len());
}

#[test]
fn single_orig_evaluation_is_fully_populated() {
    let eval = evaluate(&[PipelineSpec::orig(0)], &synthetic(1500, 3), &SplitPlan::new(0.7, 1), &HarnessOptions::default()).unwrap();
    assert_eq!(eval.records.len(), 1);
    let r = &eval.records[0];
    assert!(r.correctness.accuracy.is_some() && r.correctness.f1.is_some());
    let n = r.fairness.normalized;
    for v in [n.di_star, n.tprb, n.tnrb, n.cd, n.crd] {
        assert!(v.is_some());
    }
    assert!(r.cv_accuracy.is_some());
    assert_eq!(r.wall_clock_overhead, Some(0.0));
    assert_eq!(r.slice.rows, 1500);
    assert_eq!(r.slice.attributes, 6);
}

#[test]
fn every_normalized_value_lies_in_unit_interval() {
    let data = synthetic(3000, 4);
    let eval = evaluate(&specs(Approach::all()), &data, &SplitPlan::new(0.7, 2), &quick()).unwrap();
    assert!(eval.failures.is_empty(), "{:?}", eval.failures);
    assert_eq!(eval.records.len(), Approach::all().len());
    for r in &eval.records {
        let n = r.fairness.normalized;
        for v in [n.di_star, n.tprb, n.tnrb, n.cd, n.crd].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&v), "{} {v}", r.approach_id);
        }
    }
}

#[test]
fn evaluation_is_reproducible_apart_from_timing() {
    let data = synthetic(1500, 5);
    let run = || {
        let eval = evaluate(&specs(Approach::all()), &data, &SplitPlan::new(0.7, 8), &quick()).unwrap();
        eval.records.into_iter().map(without_clock).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn failing_spec_is_recorded_and_the_run_continues() {
    let data = synthetic(1000, 6);
    let list = specs([Approach::Feld { lambda: 3.0 }, Approach::Hardt]);
    let eval = evaluate(&list, &data, &SplitPlan::new(0.7, 1), &quick()).unwrap();
    assert_eq!(eval.records.len(), 1);
    assert_eq!(eval.records[0].approach_id, "hardt");
    assert_eq!(eval.failures.len(), 1);
    assert_eq!(eval.failures[0].approach_id, "feld(3)");
    assert!(evaluate(&list, &data, &SplitPlan::new(1.5, 1), &quick()).is_err());
}

#[test]
fn reweighing_improves_disparate_impact() {
    let data = synthetic(10_000, 7);
    let list = specs([Approach::Orig, Approach::KamRw { route: Default::default() }]);
    let eval = evaluate(&list, &data, &SplitPlan::new(0.7, 3), &quick()).unwrap();
    let di = |i: usize| eval.records[i].fairness.normalized.di_star.unwrap();
    assert!(di(1) >= di(0), "kam_rw {} vs orig {}", di(1), di(0));
}

#[test]
fn orig_paired_with_itself_has_zero_overhead() {
    let eval = evaluate(&[PipelineSpec::orig(0)], &synthetic(800, 8), &SplitPlan::new(0.7, 1), &quick()).unwrap();
    let r = &eval.records[0];
    assert_eq!(measure_overhead(&PipelineSpec::orig(0), r, r).unwrap(), 0.0);
}

#[test]
fn pairing_requires_matching_slice_and_seed() {
    let data = synthetic(800, 8);
    let list = specs([Approach::Orig, Approach::Hardt]);
    let a = evaluate(&list, &data, &SplitPlan::new(0.7, 1), &quick()).unwrap().records;
    let b = evaluate(&list, &data, &SplitPlan::new(0.7, 2), &quick()).unwrap().records;
    assert!(measure_overhead(&list[1], &a[0], &a[1]).is_ok());
    let err = measure_overhead(&list[1], &b[0], &a[1]).unwrap_err();
    assert!(matches!(err, Error::Pairing(_)));
    assert_eq!(err.exit_code(), 13);
    let mut other_slice = a[0].clone();
    other_slice.slice.rows += 1;
    assert!(matches!(measure_overhead(&list[1], &other_slice, &a[1]), Err(Error::Pairing(_))));
    assert!(matches!(measure_overhead(&list[1], &a[1], &a[1]), Err(Error::Pairing(_))));
}

#[test]
fn sleep_padded_stub_overhead_recovers_the_pad() {
    let pad = Duration::from_millis(60);
    let (train, test) = split(&synthetic(2000, 9), &SplitPlan::new(0.7, 1)).unwrap();
    let opts = quick();
    let orig = PipelineSpec::orig(0);
    let eval = evaluate(&[orig.clone()], &synthetic(2000, 9), &SplitPlan::new(0.7, 1), &opts).unwrap();
    let base = eval.records[0].clone();
    let (_, bare) = median_wall_clock(5, || run_pipeline(&orig, &train, &test, &opts)).unwrap();
    let (_, padded) = median_wall_clock(5, || {
        let run = run_pipeline(&orig, &train, &test, &opts)?;
        let _token = timing_token();
        std::thread::sleep(pad);
        Ok(run)
    })
    .unwrap();
    let paired_orig = BenchmarkRecord { wall_clock_total: bare, ..base.clone() };
    let stub = BenchmarkRecord { wall_clock_total: padded, ..base };
    let overhead = measure_overhead(&orig, &paired_orig, &stub).unwrap();
    let expected = pad.as_secs_f64();
    assert!((overhead - expected).abs() <= 0.1 * expected, "overhead {overhead} vs pad {expected}");
}

#[test]
fn rows_sweep_gives_one_record_per_spec_and_point() {
    let data = synthetic(6000, 10);
    let list = specs([Approach::Orig, Approach::Hardt]);
    let eval = scalability_sweep(&list, &data, Axis::Rows, &[1000, 5000], &SplitPlan::new(0.7, 1), &quick()).unwrap();
    assert_eq!(eval.records.len(), 4);
    let rows: Vec<usize> = eval.records.iter().map(|r| r.slice.rows).collect();
    assert_eq!(rows, [1000, 1000, 5000, 5000]);
    for r in &eval.records {
        assert!(r.wall_clock_overhead.is_some());
    }
}

#[test]
fn attribute_sweep_keeps_top_attributes() {
    let data = synthetic(2000, 11);
    let list = specs([Approach::Orig]);
    let eval = scalability_sweep(&list, &data, Axis::Attributes, &[2, 4, 6], &SplitPlan::new(0.7, 1), &quick()).unwrap();
    let attrs: Vec<usize> = eval.records.iter().map(|r| r.slice.attributes).collect();
    assert_eq!(attrs, [2, 4, 6]);
    let full = evaluate(&list, &data, &SplitPlan::new(0.7, 1), &quick()).unwrap();
    assert_eq!(without_clock(eval.records[2].clone()), without_clock(full.records[0].clone()));
}

#[test]
fn sweep_points_are_validated() {
    let data = synthetic(1000, 12);
    let list = specs([Approach::Orig]);
    let plan = SplitPlan::new(0.7, 1);
    for (axis, points) in [
        (Axis::Rows, vec![500, 400]),
        (Axis::Rows, vec![500, 1001]),
        (Axis::Rows, vec![]),
        (Axis::Attributes, vec![7]),
        (Axis::Attributes, vec![0, 2]),
    ] {
        let err = scalability_sweep(&list, &data, axis, &points, &plan, &quick()).unwrap_err();
        assert_eq!(err.exit_code(), 6, "{axis:?} {points:?}");
    }
}

#[test]
fn orig_runtime_grows_with_rows() {
    let data = synthetic(20_000, 13);
    let opts = HarnessOptions { timing_repeats: 5, ..quick() };
    let eval =
        scalability_sweep(&[PipelineSpec::orig(0)], &data, Axis::Rows, &[1000, 5000, 20_000], &SplitPlan::new(0.7, 1), &opts).unwrap();
    let totals: Vec<f64> = eval.records.iter().map(|r| r.wall_clock_total).collect();
    assert!(totals.windows(2).all(|w| w[0] <= w[1]), "{totals:?}");
}

#[test]
fn sample_variance_oracle() {
    let s = summarize(&[0.8, 0.9]).unwrap();
    assert!((s.variance - 0.005).abs() < 1e-15);
    assert!((s.mean - 0.85).abs() < 1e-15);
    assert_eq!((s.min, s.max, s.count), (0.8, 0.9, 2));
    let s = summarize(&[1.0, 2.0, 4.0, 7.0]).unwrap();
    // mean 3.5; squared deviations 6.25 + 2.25 + 0.25 + 12.25 = 21
    assert!((s.variance - 7.0).abs() < 1e-12);
    assert!(summarize(&[0.3]).is_none());
}

#[test]
fn repeating_a_deterministic_cell_has_zero_variance() {
    let data = synthetic(1000, 14);
    let list = specs([Approach::Orig, Approach::ZafarDiFair { c: 0.0 }]);
    let mut records = Vec::new();
    for _ in 0..3 {
        records.extend(evaluate(&list, &data, &SplitPlan::new(2.0 / 3.0, 4), &quick()).unwrap().records);
    }
    for row in summarize_records(&list, &records) {
        assert_eq!(row.count, 3);
        assert_eq!(row.variance, Some(0.0), "{row:?}");
    }
}

#[test]
fn stability_gives_ten_records_per_spec() {
    let data = synthetic(2000, 15);
    let list = specs([Approach::Orig, Approach::Pleiss]);
    let result = stability_suite(&list, &data, 10, 2.0 / 3.0, 100, &quick()).unwrap();
    let records = &result.evaluation.records;
    assert_eq!(records.len(), 20);
    for spec in &list {
        let mine: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.pipeline.approach == spec.approach).collect();
        assert_eq!(mine.len(), 10);
        let seeds: Vec<u64> = mine.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, (100..110).collect::<Vec<u64>>());
        let folds: Vec<Option<usize>> = mine.iter().map(|r| r.slice.fold).collect();
        assert_eq!(folds, (0..10).map(Some).collect::<Vec<_>>());
    }
    assert_eq!(result.summary.len(), list.len() * STABILITY_METRICS.len());
    let acc: &StabilityRow = result.summary.iter().find(|r| r.approach_id == "orig" && r.metric == "accuracy").unwrap();
    let values: Vec<f64> = records.iter().filter(|r| r.approach_id == "orig").map(|r| r.correctness.accuracy.unwrap()).collect();
    assert_eq!(acc.variance, summarize(&values).map(|s| s.variance));
    assert!(stability_suite(&list, &data, 1, 2.0 / 3.0, 0, &quick()).is_err());
}

#[test]
fn fitted_predictor_round_trips_through_json() {
    let data = synthetic(2000, 16);
    let (train, test) = split(&data, &SplitPlan::new(0.7, 1)).unwrap();
    let scaler = Standardizer::fit(&train);
    let (train, test) = (scaler.apply(&train).unwrap(), scaler.apply(&test).unwrap());
    let dir = tempfile::tempdir().unwrap();
    for approach in [Approach::Hardt, Approach::Pleiss, Approach::Feld { lambda: 1.0 }, Approach::KamRoc { grid: vec![0.6, 0.7] }] {
        let run = run_pipeline(&PipelineSpec::new(approach, 3), &train, &test, &quick()).unwrap();
        let path = dir.path().join("predictor.json");
        save_json(&run.predictor, &path).unwrap();
        let back: PipelinePredictor = load_json(&path).unwrap();
        assert_eq!(back, run.predictor);
        assert_eq!(back.predict(&test).unwrap(), run.predictions);
    }
}
