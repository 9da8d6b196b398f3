use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use risdoa::anm;
use risdoa::baselines::{self, GridDictionary};
use risdoa::error::{Error, Result};
use risdoa::harness::{self, presets, ExperimentConfig, Method, RunManifest, TrialInput};
use risdoa::signal::{self, Scenario};
use risdoa::spectrum::{self, Spectrum};

#[derive(Parser)]
#[command(name = "risdoa", version, about = "RIS-aided DOA estimation on non-uniform linear arrays")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (flat JSON); defaults to the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Methods to run; repeat or comma-separate.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (else RIS_DOA_THREADS, else the config, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// One array realization for every trial.
    #[arg(long, global = true)]
    fixed_geometry: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write one scenario and its received signal.
    Simulate,
    /// Estimate directions for one scenario with one method.
    Estimate {
        /// Scenario JSON written by `simulate`; otherwise trial 0 of the config.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Monte-Carlo RMSE at the config's base point.
    Bench,
    /// Monte-Carlo RMSE over the config's sweep variable.
    Sweep,
    /// Regenerate one of the preset figures as CSV.
    Reproduce {
        #[arg(value_parser = presets::FIGURES)]
        figure: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(base)
    }

    fn apply(&self, mut config: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if !self.method.is_empty() {
            config.methods = self.method.clone();
        }
        if let Some(dir) = &self.out_dir {
            config.output_dir = dir.clone();
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if self.fixed_geometry {
            config.fixed_geometry = true;
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    match cli.command {
        Command::Simulate => simulate(&common.load()?),
        Command::Estimate { scenario } => estimate(&common.load()?, scenario.as_deref()),
        Command::Bench => {
            let mut config = common.load()?;
            config.sweep_var = None;
            config.sweep_values.clear();
            run_benchmark("bench", &config, common.threads)
        }
        Command::Sweep => {
            let config = common.load()?;
            if config.sweep_var.is_none() {
                return Err(Error::Config {
                    field: "sweep_var".into(),
                    message: "`sweep` needs a sweep variable in the config".into(),
                });
            }
            run_benchmark("sweep", &config, common.threads)
        }
        Command::Reproduce { figure } => reproduce(&figure, &common),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn simulate(config: &ExperimentConfig) -> Result<()> {
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let scenario = harness::build_scenario(config, 0)?;
    let received = signal::simulate_received(&scenario)?;
    let scenario_path = dir.join("scenario.json");
    let file = std::fs::File::create(&scenario_path).map_err(|e| Error::Io {
        path: scenario_path.display().to_string(),
        source: e,
    })?;
    serde_json::to_writer_pretty(file, &scenario)?;
    let received_path = dir.join("received.csv");
    signal::write_received_csv(&received_path, &received.r)?;

    let mut manifest = RunManifest::new("simulate", config, 1, None);
    manifest.outputs = vec![scenario_path.clone(), received_path.clone()];
    manifest.write(dir.join("simulate_manifest.json"))?;
    println!(
        "{} targets, M = {}, noise variance {:.4e}",
        scenario.targets.len(),
        received.r.len(),
        received.noise_variance
    );
    println!("wrote {} and {}", scenario_path.display(), received_path.display());
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let scenario: Scenario = serde_json::from_str(&text)?;
    scenario.validate()?;
    Ok(scenario)
}

/// γ for a loaded scenario: the config's fixed value, else its rule at the
/// scenario's SNR.
fn scenario_gamma(config: &ExperimentConfig, scenario: &Scenario) -> Result<f64> {
    if let Some(g) = config.gamma {
        return Ok(g);
    }
    let snr = scenario.snr_db.ok_or_else(|| Error::Config {
        field: "gamma".into(),
        message: "the scenario is noiseless; set an explicit gamma in the config".into(),
    })?;
    anm::gamma_from_snr(snr, scenario.measurement.n_measurements(), scenario.targets.len(), config.gamma_mode)
}

fn estimate(config: &ExperimentConfig, scenario_path: Option<&Path>) -> Result<()> {
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let scenario = match scenario_path {
        Some(p) => load_scenario(p)?,
        None => harness::build_scenario(config, 0)?,
    };
    let gamma = scenario_gamma(config, &scenario)?;
    let config = ExperimentConfig {
        gamma: Some(gamma),
        ..config.clone()
    };
    let input = TrialInput::from_scenario(&config, scenario)?;
    let k = input.scenario.targets.len();

    let mut outputs = Vec::new();
    for &method in &config.methods {
        let (angles, deficit, spectrum) = method_spectrum(method, &config, &input, k, dir, &mut outputs)?;
        let path = dir.join(format!("spectrum_{}.csv", method.name()));
        spectrum::write_spectrum_csv(&path, &spectrum)?;
        outputs.push(path);
        let shown: Vec<String> = angles.iter().map(|a| format!("{a:.4}")).collect();
        print!("{}: [{}]", method.name(), shown.join(", "));
        if deficit > 0 {
            print!(" ({deficit} missing)");
        }
        match harness::rmse(&angles, &input.scenario.thetas_deg()) {
            Ok(e) if deficit == 0 => println!("  rmse {e:.4} deg"),
            _ => println!(),
        }
    }
    let mut manifest = RunManifest::new("estimate", &config, 1, None);
    manifest.outputs = outputs;
    manifest.write(dir.join("estimate_manifest.json"))
}

/// Estimates, deficit and a plottable spectrum for one method. Solver-based
/// methods also leave their diagnostics next to the spectrum.
fn method_spectrum(
    method: Method,
    config: &ExperimentConfig,
    input: &TrialInput,
    k: usize,
    dir: &Path,
    outputs: &mut Vec<PathBuf>,
) -> Result<(Vec<f64>, usize, Spectrum)> {
    let gamma = config.gamma_value()?;
    let opts = config.estimator_options();
    let est = match method {
        Method::Proposed => anm::estimate_doa(input.r(), &input.c, &input.transformation.t, k, gamma, &opts)?,
        Method::Anm => baselines::anm_ula_estimate(input.r(), &input.c, gamma, k, &opts)?,
        Method::Fft => {
            let f = baselines::fft_estimate(input.r(), &input.c, k, config.n_fft)?;
            return Ok((f.angles_deg, f.deficit, f.spectrum));
        }
        Method::Omp => {
            let dict = GridDictionary::new(&input.c, input.geometry(), config.omp_step_deg)?;
            let o = baselines::omp_estimate(input.r(), &dict, k)?;
            let s = o.spectrum(&dict);
            return Ok((o.angles_deg, o.deficit, s));
        }
    };
    let path = dir.join(format!("diagnostics_{}.json", method.name()));
    let file = std::fs::File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::to_writer_pretty(file, &est.solution.diagnostics())?;
    outputs.push(path);
    Ok((est.angles_deg, est.deficit, est.spectrum))
}

fn run_benchmark(name: &str, config: &ExperimentConfig, threads_flag: Option<usize>) -> Result<()> {
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let threads = harness::resolve_threads(threads_flag, config)?;
    let result = harness::with_threads(threads, || harness::run_sweep(config))??;

    let bench = dir.join(format!("{name}.csv"));
    let log = dir.join(format!("{name}_trials.csv"));
    harness::write_benchmark_csv(&bench, &result)?;
    harness::write_trial_log_csv(&log, &result)?;
    let mut manifest = RunManifest::new(name, config, threads, Some(&result));
    manifest.outputs = vec![bench.clone(), log];
    manifest.write(dir.join(format!("{name}_manifest.json")))?;

    for p in &result.points {
        for s in &p.summaries {
            println!(
                "{}={:<8} {:<9} rmse {:>9.4} deg  mean {:.4} s  failures {}/{}",
                p.sweep_var,
                p.sweep_value,
                s.method.name(),
                s.rmse_deg,
                s.mean_runtime_s,
                s.failures,
                s.trials
            );
        }
    }
    println!("wrote {}", bench.display());
    Ok(())
}

fn reproduce(figure: &str, common: &Common) -> Result<()> {
    match figure {
        "fig2" => {
            let config = common.apply(presets::fig2())?;
            let dir = &config.output_dir;
            prepare_dir(dir)?;
            let input = TrialInput::new(&config, 0)?;
            let k = input.scenario.targets.len();
            let mut outputs = Vec::new();
            let mut spectra = Vec::new();
            for method in Method::ALL {
                let (_, _, s) = method_spectrum(method, &config, &input, k, dir, &mut outputs)?;
                spectra.push((method.name(), s));
            }
            let refs: Vec<(&str, &Spectrum)> = spectra.iter().map(|(m, s)| (*m, s)).collect();
            let path = dir.join("fig2_spectra.csv");
            spectrum::write_spectra_csv(&path, &refs)?;
            println!("wrote {}", path.display());
            run_benchmark("fig2", &config, common.threads)
        }
        "fig3" => {
            for preset in presets::fig3() {
                let snr = preset.snr_db.unwrap_or_default();
                let config = common.apply(preset)?;
                run_benchmark(&format!("fig3_snr{snr}"), &config, common.threads)?;
            }
            Ok(())
        }
        "fig4" => run_benchmark("fig4", &common.apply(presets::fig4())?, common.threads),
        "fig5" => run_benchmark("fig5", &common.apply(presets::fig5())?, common.threads),
        "fig6" => run_benchmark("fig6", &common.apply(presets::fig6())?, common.threads),
        other => Err(Error::Parameter(format!("unknown figure {other}"))),
    }
}
