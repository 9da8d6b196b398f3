//! Seeded Monte-Carlo experiments: configuration, RMSE scoring, sweeps and
//! their CSV/JSON outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use itertools::Itertools;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anm::{self, EstimatorOptions, GammaMode, SolverOptions};
use crate::baselines::{self, GridDictionary};
use crate::error::{Error, Result};
use crate::geometry::{self, ArrayGeometry, GridSpacing, TransformationMatrix};
use crate::numerics::{CMatrix, CVector};
use crate::signal::{self, ReceivedSignal, Scenario, Target};
use crate::spectrum::open_csv;

/// Error charged for every requested direction an estimator failed to return.
pub const DEFICIT_PENALTY_DEG: f64 = 90.0;

pub const DEFAULT_TARGETS_DEG: [f64; 3] = [-30.345, 0.789, 20.456];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Fft,
    Omp,
    Anm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Fft, Method::Omp, Method::Anm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Fft => "fft",
            Method::Omp => "omp",
            Method::Anm => "anm",
        }
    }
}

/// How the proposed method obtains its transformation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformFit {
    /// Least squares on the fixed angle grid; uses the geometry only.
    #[default]
    Grid,
    /// Fit on the true target directions. Diagnostic: it reads the answer.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    SnrDb,
    Sigma,
    NMeasurements,
    Gamma,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::SnrDb => "snr_db",
            SweepVar::Sigma => "sigma",
            SweepVar::NMeasurements => "n_measurements",
            SweepVar::Gamma => "gamma",
        }
    }
}

/// One experiment, as a flat JSON object. Every field has a default matching
/// the reference setup at 20 dB, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_elements: usize,
    pub wavelength: f64,
    pub sigma: f64,
    pub n_measurements: usize,
    pub receiver_deg: f64,
    pub targets_deg: Vec<f64>,
    /// `null` runs noiseless, which then needs an explicit `gamma`.
    pub snr_db: Option<f64>,
    pub gamma_mode: GammaMode,
    /// Fixed γ; overrides `gamma_mode`.
    pub gamma: Option<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub master_seed: u64,
    pub sweep_var: Option<SweepVar>,
    pub sweep_values: Vec<f64>,
    /// Use one array realization for every trial instead of one per trial.
    pub fixed_geometry: bool,
    pub transform_fit: TransformFit,
    pub fit_points: usize,
    pub fit_spacing: GridSpacing,
    pub spectrum_points: usize,
    pub n_fft: usize,
    pub omp_step_deg: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            n_elements: 16,
            wavelength: 1.0,
            sigma: 0.1,
            n_measurements: 32,
            receiver_deg: 0.0,
            targets_deg: DEFAULT_TARGETS_DEG.to_vec(),
            snr_db: Some(20.0),
            gamma_mode: GammaMode::PaperFit,
            gamma: None,
            methods: Method::ALL.to_vec(),
            trials: 100,
            master_seed: 1,
            sweep_var: None,
            sweep_values: Vec::new(),
            fixed_geometry: false,
            transform_fit: TransformFit::Grid,
            fit_points: geometry::DEFAULT_FIT_POINTS,
            fit_spacing: GridSpacing::UniformAngle,
            spectrum_points: crate::spectrum::DEFAULT_SPECTRUM_POINTS,
            n_fft: baselines::DEFAULT_FFT_POINTS,
            omp_step_deg: baselines::DEFAULT_DICTIONARY_STEP_DEG,
            max_iterations: solver.max_iterations,
            tolerance: solver.tolerance,
            threads: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            config_error(&field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        if self.n_elements < 2 {
            return Err(config_error("n_elements", "must be at least 2"));
        }
        if self.n_measurements == 0 {
            return Err(config_error("n_measurements", "must be at least 1"));
        }
        if self.targets_deg.is_empty() {
            return Err(config_error("targets_deg", "need at least one target"));
        }
        if self.targets_deg.len() > 5 {
            return Err(config_error("targets_deg", "RMSE matching supports at most 5 targets"));
        }
        if self.methods.is_empty() {
            return Err(config_error("methods", "need at least one method"));
        }
        if self.sweep_var.is_some() && self.sweep_values.is_empty() {
            return Err(config_error("sweep_values", "a sweep needs at least one value"));
        }
        if self.sweep_var.is_none() && !self.sweep_values.is_empty() {
            return Err(config_error("sweep_var", "sweep_values given without a sweep variable"));
        }
        if self.sweep_var == Some(SweepVar::NMeasurements)
            && self.sweep_values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0))
        {
            return Err(config_error("sweep_values", "measurement counts must be positive integers"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(config_error("gamma", "must be positive and finite"));
            }
        }
        if self.snr_db.is_none() && self.gamma.is_none() && self.sweep_var != Some(SweepVar::Gamma) {
            return Err(config_error("gamma", "a noiseless experiment needs an explicit gamma"));
        }
        if self.threads == Some(0) {
            return Err(config_error("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// The config with the sweep variable set to `value`.
    pub fn at(&self, var: SweepVar, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match var {
            SweepVar::SnrDb => c.snr_db = Some(value),
            SweepVar::Sigma => c.sigma = value,
            SweepVar::NMeasurements => c.n_measurements = value as usize,
            SweepVar::Gamma => c.gamma = Some(value),
        }
        c.sweep_var = None;
        c.sweep_values.clear();
        c.validate()?;
        Ok(c)
    }

    pub fn gamma_value(&self) -> Result<f64> {
        if let Some(g) = self.gamma {
            return Ok(g);
        }
        let snr = self
            .snr_db
            .ok_or_else(|| config_error("gamma", "a noiseless experiment needs an explicit gamma"))?;
        anm::gamma_from_snr(snr, self.n_measurements, self.targets_deg.len(), self.gamma_mode)
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            solver: SolverOptions {
                max_iterations: self.max_iterations,
                tolerance: self.tolerance,
                ..SolverOptions::default()
            },
            spectrum_points: self.spectrum_points,
            u: 1.0,
        }
    }

    pub fn fit_grid(&self) -> Vec<f64> {
        geometry::fit_grid(self.fit_points, self.fit_spacing)
    }
}

/// Seeds for one trial. They depend on the master seed and trial index only,
/// so every point of a sweep sees the same array, codes, phases and noise
/// draws (common random numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub geometry: u64,
    pub measurement: u64,
    pub amplitudes: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn derive(master_seed: u64, trial: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial as u64);
        Self {
            geometry: rng.next_u64(),
            measurement: rng.next_u64(),
            amplitudes: rng.next_u64(),
            noise: rng.next_u64(),
        }
    }

    /// Geometry seed shared by all trials under `fixed_geometry`.
    pub fn fixed_geometry(master_seed: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(u64::MAX);
        rng.next_u64()
    }
}

/// Synthesize the scenario for `trial` of `config`.
pub fn build_scenario(config: &ExperimentConfig, trial: usize) -> Result<Scenario> {
    let seeds = TrialSeeds::derive(config.master_seed, trial);
    let geometry_seed = if config.fixed_geometry {
        TrialSeeds::fixed_geometry(config.master_seed)
    } else {
        seeds.geometry
    };
    let geometry = geometry::make_nulra(config.n_elements, config.wavelength, config.sigma, geometry_seed)?;
    let measurement = signal::make_measurement_matrix(config.n_elements, config.n_measurements, seeds.measurement)?;
    let amps = signal::random_unit_amplitudes(config.targets_deg.len(), seeds.amplitudes);
    let scenario = Scenario {
        geometry,
        targets: config
            .targets_deg
            .iter()
            .zip(amps)
            .map(|(&theta_deg, amplitude)| Target { theta_deg, amplitude })
            .collect(),
        receiver_deg: config.receiver_deg,
        measurement,
        snr_db: config.snr_db,
        noise_seed: seeds.noise,
        noise_floor: signal::DEFAULT_NOISE_FLOOR,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Minimum over assignments of Σ(θ̂ − θ)², with every missing estimate
/// charged [`DEFICIT_PENALTY_DEG`]. Returns (sum, number of missing).
pub fn matched_squared_error(estimates: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    let k = truth.len();
    if k == 0 {
        return Err(Error::param("RMSE is undefined for zero targets"));
    }
    if estimates.len() > k {
        return Err(Error::param(format!("{} estimates for {k} targets", estimates.len())));
    }
    let missing = k - estimates.len();
    let best = (0..k)
        .permutations(estimates.len())
        .map(|perm| {
            perm.iter()
                .zip(estimates)
                .map(|(&t, e)| (e - truth[t]).powi(2))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok((best + missing as f64 * DEFICIT_PENALTY_DEG.powi(2), missing))
}

/// sqrt of the mean squared error under the best estimate-to-target matching.
pub fn rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    let (sum, _) = matched_squared_error(estimates, truth)?;
    Ok((sum / truth.len() as f64).sqrt())
}

/// Per-trial context shared by all methods.
pub struct TrialInput {
    pub scenario: Scenario,
    pub received: ReceivedSignal,
    pub c: CMatrix,
    pub transformation: TransformationMatrix,
}

impl TrialInput {
    pub fn new(config: &ExperimentConfig, trial: usize) -> Result<Self> {
        Self::from_scenario(config, build_scenario(config, trial)?)
    }

    pub fn from_scenario(config: &ExperimentConfig, scenario: Scenario) -> Result<Self> {
        let received = signal::simulate_received(&scenario)?;
        let c = scenario.combined_matrix()?;
        let transformation = match config.transform_fit {
            TransformFit::Grid => geometry::compute_transformation(&scenario.geometry, &config.fit_grid())?,
            TransformFit::Oracle => geometry::compute_transformation_oracle(&scenario.geometry, &scenario.thetas_deg())?,
        };
        Ok(Self {
            scenario,
            received,
            c,
            transformation,
        })
    }

    pub fn r(&self) -> &CVector {
        &self.received.r
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.scenario.geometry
    }
}

/// Angles from one method, plus the deficit it reported.
pub fn run_method(method: Method, config: &ExperimentConfig, input: &TrialInput) -> Result<(Vec<f64>, usize)> {
    let k = input.scenario.targets.len();
    match method {
        Method::Proposed => {
            let est = anm::estimate_doa(
                input.r(),
                &input.c,
                &input.transformation.t,
                k,
                config.gamma_value()?,
                &config.estimator_options(),
            )?;
            Ok((est.angles_deg, est.deficit))
        }
        Method::Anm => {
            let est = baselines::anm_ula_estimate(input.r(), &input.c, config.gamma_value()?, k, &config.estimator_options())?;
            Ok((est.angles_deg, est.deficit))
        }
        Method::Fft => {
            let est = baselines::fft_estimate(input.r(), &input.c, k, config.n_fft)?;
            Ok((est.angles_deg, est.deficit))
        }
        Method::Omp => {
            let dict = GridDictionary::new(&input.c, input.geometry(), config.omp_step_deg)?;
            let est = baselines::omp_estimate(input.r(), &dict, k)?;
            Ok((est.angles_deg, est.deficit))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub method: Method,
    pub trial: usize,
    pub estimates_deg: Vec<f64>,
    pub squared_error_sum: f64,
    pub targets: usize,
    pub deficit: usize,
    pub runtime_s: f64,
    /// Error message when the method failed; failed trials carry no error.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rmse_deg: f64,
    pub mean_runtime_s: f64,
    pub median_runtime_s: f64,
    pub trials: usize,
    pub failures: usize,
    /// Trials in which at least one direction was missing.
    pub deficit_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<TrialRecord>,
}

impl PointResult {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Pool per-trial records of one method into a summary. Failed trials are
/// excluded from the RMSE and the runtimes.
pub fn summarize(method: Method, records: &[&TrialRecord]) -> MethodSummary {
    let ok: Vec<&&TrialRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let sq: f64 = ok.iter().map(|r| r.squared_error_sum).sum();
    let count: usize = ok.iter().map(|r| r.targets).sum();
    let mut times: Vec<f64> = ok.iter().map(|r| r.runtime_s).collect();
    times.sort_by(f64::total_cmp);
    let median = match times.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => times[n / 2],
        n => 0.5 * (times[n / 2 - 1] + times[n / 2]),
    };
    MethodSummary {
        method,
        rmse_deg: if count == 0 { f64::NAN } else { (sq / count as f64).sqrt() },
        mean_runtime_s: if times.is_empty() {
            f64::NAN
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        },
        median_runtime_s: median,
        trials: records.len(),
        failures: records.len() - ok.len(),
        deficit_trials: ok.iter().filter(|r| r.deficit > 0).count(),
    }
}

fn run_trial(config: &ExperimentConfig, trial: usize, label: (&str, f64)) -> Vec<TrialRecord> {
    let record = |method: Method, outcome: Result<(Vec<f64>, usize)>, runtime_s: f64| {
        let targets = config.targets_deg.len();
        let mut rec = TrialRecord {
            sweep_var: label.0.to_string(),
            sweep_value: label.1,
            method,
            trial,
            estimates_deg: Vec::new(),
            squared_error_sum: f64::NAN,
            targets,
            deficit: 0,
            runtime_s,
            failure: None,
        };
        match outcome.and_then(|(est, deficit)| {
            let (sq, missing) = matched_squared_error(&est, &config.targets_deg)?;
            Ok((est, deficit.max(missing), sq))
        }) {
            Ok((est, deficit, sq)) => {
                rec.estimates_deg = est;
                rec.deficit = deficit;
                rec.squared_error_sum = sq;
            }
            Err(e) => {
                log::warn!("trial {trial}: {} failed: {e}", method.name());
                rec.failure = Some(e.to_string());
            }
        }
        rec
    };

    let input = match TrialInput::new(config, trial) {
        Ok(i) => i,
        Err(e) => {
            let msg = e.to_string();
            return config
                .methods
                .iter()
                .map(|&m| record(m, Err(Error::param(msg.clone())), 0.0))
                .collect();
        }
    };
    config
        .methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let out = run_method(m, config, &input);
            record(m, out, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Run every trial of one (already resolved) configuration.
pub fn run_point(config: &ExperimentConfig, label: (&str, f64)) -> Result<PointResult> {
    config.validate()?;
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t, label))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summaries = config
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.method == m).collect();
            summarize(m, &mine)
        })
        .collect();
    Ok(PointResult {
        sweep_var: label.0.to_string(),
        sweep_value: label.1,
        summaries,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub sweep_var: String,
    pub points: Vec<PointResult>,
}

impl BenchmarkResult {
    pub fn rmse_series(&self, method: Method) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.summary(method).map_or(f64::NAN, |s| s.rmse_deg))
            .collect()
    }
}

/// Label used for a configuration without a sweep variable.
pub const NO_SWEEP: &str = "none";

pub fn run_sweep(config: &ExperimentConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let Some(var) = config.sweep_var else {
        let point = run_point(config, (NO_SWEEP, 0.0))?;
        return Ok(BenchmarkResult {
            sweep_var: NO_SWEEP.to_string(),
            points: vec![point],
        });
    };
    let points = config
        .sweep_values
        .iter()
        .map(|&v| {
            log::info!("{} = {v}", var.name());
            run_point(&config.at(var, v)?, (var.name(), v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkResult {
        sweep_var: var.name().to_string(),
        points,
    })
}

/// `sweep_var,sweep_value,method,rmse_deg,mean_runtime_s,trials,failures`
pub fn write_benchmark_csv(path: impl AsRef<Path>, result: &BenchmarkResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_csv(path)?;
    w.write_record([
        "sweep_var",
        "sweep_value",
        "method",
        "rmse_deg",
        "mean_runtime_s",
        "trials",
        "failures",
    ])?;
    for p in &result.points {
        for s in &p.summaries {
            w.write_record([
                p.sweep_var.clone(),
                p.sweep_value.to_string(),
                s.method.name().to_string(),
                s.rmse_deg.to_string(),
                s.mean_runtime_s.to_string(),
                s.trials.to_string(),
                s.failures.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const TRIAL_LOG_HEADER: [&str; 10] = [
    "sweep_var",
    "sweep_value",
    "method",
    "trial",
    "estimates_deg",
    "squared_error_sum",
    "targets",
    "deficit",
    "runtime_s",
    "failure",
];

/// One row per (point, method, trial); estimates joined with `;`.
pub fn write_trial_log_csv(path: impl AsRef<Path>, result: &BenchmarkResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_csv(path)?;
    w.write_record(TRIAL_LOG_HEADER)?;
    for p in &result.points {
        for r in &p.records {
            w.write_record([
                r.sweep_var.clone(),
                r.sweep_value.to_string(),
                r.method.name().to_string(),
                r.trial.to_string(),
                r.estimates_deg.iter().map(|e| e.to_string()).join(";"),
                r.squared_error_sum.to_string(),
                r.targets.to_string(),
                r.deficit.to_string(),
                r.runtime_s.to_string(),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pooled RMSE per (sweep value, method) recomputed from a trial log.
pub fn pooled_rmse_from_log(path: impl AsRef<Path>) -> Result<Vec<(f64, String, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let mut acc: Vec<(f64, String, f64, usize)> = Vec::new();
    for row in reader.records() {
        let row = row?;
        if !row[9].is_empty() {
            continue;
        }
        let value: f64 = row[1]
            .parse()
            .map_err(|_| Error::param(format!("bad sweep value {:?} in {}", &row[1], path.display())))?;
        let sq: f64 = row[5]
            .parse()
            .map_err(|_| Error::param(format!("bad squared error {:?} in {}", &row[5], path.display())))?;
        let k: usize = row[6]
            .parse()
            .map_err(|_| Error::param(format!("bad target count {:?} in {}", &row[6], path.display())))?;
        match acc.iter_mut().find(|a| a.0 == value && a.1 == row[2]) {
            Some(a) => {
                a.2 += sq;
                a.3 += k;
            }
            None => acc.push((value, row[2].to_string(), sq, k)),
        }
    }
    Ok(acc.into_iter().map(|(v, m, sq, k)| (v, m, (sq / k as f64).sqrt())).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub trial_seeds: Vec<TrialSeeds>,
    pub fixed_geometry_seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub summaries: Vec<PointSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub methods: Vec<MethodSummary>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, threads: usize, result: Option<&BenchmarkResult>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            threads,
            trial_seeds: (0..config.trials).map(|t| TrialSeeds::derive(config.master_seed, t)).collect(),
            fixed_geometry_seed: config.fixed_geometry.then(|| TrialSeeds::fixed_geometry(config.master_seed)),
            outputs: Vec::new(),
            summaries: result
                .map(|r| {
                    r.points
                        .iter()
                        .map(|p| PointSummary {
                            sweep_var: p.sweep_var.clone(),
                            sweep_value: p.sweep_value,
                            methods: p.summaries.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

/// Thread count: explicit request, else `RIS_DOA_THREADS`, else the config,
/// else every available core.
pub fn resolve_threads(flag: Option<usize>, config: &ExperimentConfig) -> Result<usize> {
    if let Some(t) = flag {
        return if t == 0 {
            Err(config_error("threads", "must be at least 1"))
        } else {
            Ok(t)
        };
    }
    if let Ok(v) = std::env::var("RIS_DOA_THREADS") {
        return match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(config_error("RIS_DOA_THREADS", format!("expected a positive integer, got {v:?}"))),
        };
    }
    Ok(config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot build a pool of {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Preset configurations for the `reproduce` figures.
pub mod presets {
    use super::*;

    pub const FIGURES: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "fig6"];

    /// Spatial spectra and RMSE at 20 dB for all four methods.
    pub fn fig2() -> ExperimentConfig {
        ExperimentConfig::default()
    }

    /// γ sweep for the proposed method, one config per SNR.
    pub fn fig3() -> Vec<ExperimentConfig> {
        [0.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&snr| ExperimentConfig {
                snr_db: Some(snr),
                methods: vec![Method::Proposed],
                sweep_var: Some(SweepVar::Gamma),
                // γ² = 10^1, 10^1.5, …, 10^7
                sweep_values: (0..13).map(|i| 10f64.powf((1.0 + 0.5 * i as f64) / 2.0)).collect(),
                ..ExperimentConfig::default()
            })
            .collect()
    }

    pub fn fig4() -> ExperimentConfig {
        ExperimentConfig {
            sweep_var: Some(SweepVar::SnrDb),
            sweep_values: (0..=6).map(|i| 5.0 * i as f64).collect(),
            ..ExperimentConfig::default()
        }
    }

    pub fn fig5() -> ExperimentConfig {
        ExperimentConfig {
            sweep_var: Some(SweepVar::Sigma),
            sweep_values: vec![0.0, 0.025, 0.05, 0.075, 0.1],
            ..ExperimentConfig::default()
        }
    }

    pub fn fig6() -> ExperimentConfig {
        ExperimentConfig {
            sweep_var: Some(SweepVar::NMeasurements),
            sweep_values: vec![16.0, 24.0, 32.0, 48.0, 64.0],
            ..ExperimentConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[20.0, -5.0, 3.0], &[-5.0, 3.0, 20.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 9.0], &[0.0, 10.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn rmse_charges_missing_estimates() {
        let (sq, missing) = matched_squared_error(&[10.5], &[-20.0, 10.0]).unwrap();
        assert_eq!(missing, 1);
        assert!((sq - (0.25 + 8100.0)).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_exhaustive_oracle() {
        // 3! assignments written out by hand
        let truth: [f64; 3] = [-30.0, 0.0, 20.0];
        let est: [f64; 3] = [19.0, -28.0, 3.0];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| (est[i] - truth[p[i]]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((rmse(&est, &truth).unwrap() - (best / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_json_is_default() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.targets_deg, DEFAULT_TARGETS_DEG.to_vec());
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ExperimentConfig::from_json_str(r#"{"trials": "many"}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "trials"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"methods": ["proposed", "music"]}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field.starts_with("methods")), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"trails": 3}"#).unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"trials": 0}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "trials"));
        let err = ExperimentConfig::from_json_str(r#"{"snr_db": null}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "gamma"));
    }

    #[test]
    fn sweep_point_overrides() {
        let base = presets::fig6();
        let p = base.at(SweepVar::NMeasurements, 48.0).unwrap();
        assert_eq!(p.n_measurements, 48);
        assert!(p.sweep_var.is_none());
        let g = base.at(SweepVar::Gamma, 3.5).unwrap();
        assert_eq!(g.gamma_value().unwrap(), 3.5);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = TrialSeeds::derive(9, 4);
        assert_eq!(a, TrialSeeds::derive(9, 4));
        assert_ne!(a, TrialSeeds::derive(9, 5));
        assert_ne!(a, TrialSeeds::derive(10, 4));
        assert_ne!(a.geometry, a.noise);
    }

    #[test]
    fn scenarios_share_draws_across_sweep_points() {
        let base = ExperimentConfig::default();
        let a = build_scenario(&base.at(SweepVar::SnrDb, 0.0).unwrap(), 3).unwrap();
        let b = build_scenario(&base.at(SweepVar::SnrDb, 30.0).unwrap(), 3).unwrap();
        assert_eq!(a.geometry, b.geometry);
        assert_eq!(a.measurement, b.measurement);
        assert_eq!(a.targets, b.targets);
        let fixed = ExperimentConfig {
            fixed_geometry: true,
            ..base
        };
        assert_eq!(
            build_scenario(&fixed, 0).unwrap().geometry,
            build_scenario(&fixed, 7).unwrap().geometry
        );
    }

    #[test]
    fn summarize_excludes_failures() {
        let mk = |sq: f64, t: f64, failure: Option<&str>| TrialRecord {
            sweep_var: NO_SWEEP.into(),
            sweep_value: 0.0,
            method: Method::Fft,
            trial: 0,
            estimates_deg: vec![],
            squared_error_sum: sq,
            targets: 2,
            deficit: 0,
            runtime_s: t,
            failure: failure.map(String::from),
        };
        let recs = [mk(2.0, 1.0, None), mk(6.0, 3.0, None), mk(f64::NAN, 0.0, Some("boom"))];
        let s = summarize(Method::Fft, &recs.iter().collect::<Vec<_>>());
        assert_eq!(s.failures, 1);
        assert_eq!(s.trials, 3);
        assert!((s.rmse_deg - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.mean_runtime_s, 2.0);
        assert_eq!(s.median_runtime_s, 2.0);
    }
}
