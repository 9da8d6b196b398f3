use risdoa::harness::{self, BenchmarkResult, ExperimentConfig, Method, SweepVar};

fn strip_runtimes(mut r: BenchmarkResult) -> BenchmarkResult {
    for p in &mut r.points {
        for s in &mut p.summaries {
            s.mean_runtime_s = 0.0;
            s.median_runtime_s = 0.0;
        }
        for t in &mut p.records {
            t.runtime_s = 0.0;
        }
    }
    r
}

#[test]
fn noiseless_single_target_sanity_run() {
    let config = ExperimentConfig {
        sigma: 0.0,
        targets_deg: vec![-8.7],
        snr_db: None,
        gamma: Some(1.0),
        methods: vec![Method::Proposed],
        trials: 1,
        ..ExperimentConfig::default()
    };
    let result = harness::run_sweep(&config).unwrap();
    let s = result.points[0].summary(Method::Proposed).unwrap();
    assert_eq!(s.failures, 0);
    assert!(s.rmse_deg < 0.05, "{}", s.rmse_deg);
}

fn small_sweep() -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![Method::Proposed, Method::Fft, Method::Omp],
        trials: 4,
        sweep_var: Some(SweepVar::Sigma),
        sweep_values: vec![0.0, 0.05],
        max_iterations: 3000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn one_row_per_point_and_method() {
    let result = harness::run_sweep(&small_sweep()).unwrap();
    assert_eq!(result.points.len(), 2);
    for p in &result.points {
        assert_eq!(p.sweep_var, "sigma");
        assert_eq!(p.summaries.len(), 3);
        assert_eq!(p.records.len(), 12);
        for s in &p.summaries {
            assert_eq!(s.trials, 4);
            assert!(s.rmse_deg >= 0.0);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let config = small_sweep();
    let one = harness::with_threads(1, || harness::run_sweep(&config)).unwrap().unwrap();
    let three = harness::with_threads(3, || harness::run_sweep(&config)).unwrap().unwrap();
    let again = harness::with_threads(1, || harness::run_sweep(&config)).unwrap().unwrap();
    let one = strip_runtimes(one);
    assert_eq!(one, strip_runtimes(three));
    assert_eq!(one, strip_runtimes(again));
}

#[test]
fn csv_bytes_are_reproducible_apart_from_runtimes() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        trials: 3,
        methods: vec![Method::Fft, Method::Omp],
        ..ExperimentConfig::default()
    };
    let mut logs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let result = strip_runtimes(harness::run_sweep(&config).unwrap());
        let path = dir.path().join(name);
        harness::write_trial_log_csv(&path, &result).unwrap();
        logs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}
