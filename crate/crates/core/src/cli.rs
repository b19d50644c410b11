//! The `linres` command line: loads a config, runs one experiment, and
//! writes its artifacts plus a manifest into the output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::benchmarks::{beta_weight_study, run_sweep, sensitivity_study};
use crate::checks::run_theorem_check;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizationResult, Problem};
use crate::reservoir::{decouple, simulate, SimulationOptions, TimeGrid};

pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ALL_RESTARTS_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "linres", version, about = "Linear reservoir computers with optimised eigenvalue spectra")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; also seeds the optimiser restarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    pub force: bool,
    /// Fail on partial results (failed trials or restarts).
    #[arg(long, global = true)]
    pub strict: bool,
    /// Override a config key, e.g. `--set optimizer.restarts=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimise the eigenvalue spectrum for the configured task.
    Optimize,
    /// Simulate the configured reservoir and export its states.
    Simulate,
    /// Check coupled/modal and time/frequency equivalences on random instances.
    TheoremCheck {
        /// Corrupt the eigenvector matrix; the check must then fail.
        #[arg(long)]
        self_test: bool,
    },
    /// Compare methods over a sweep of node or frequency counts.
    Sweep,
    /// Perturb the optimised spectrum and measure the training error.
    Sensitivity,
    /// Optimise over a grid of cost-term weights.
    BetaStudy,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::TheoremCheck { .. } => "theorem-check",
            Command::Sweep => "sweep",
            Command::Sensitivity => "sensitivity",
            Command::BetaStudy => "beta-study",
        }
    }

    fn artifacts(&self) -> &'static [&'static str] {
        match self {
            Command::Optimize => &["optimization.json", "fit_train.csv", "fit_test.csv", "topology.json", "optimized_topology.json"],
            Command::Simulate => &["states.csv", "input.csv", "topology.json"],
            Command::TheoremCheck { .. } => &["theorem_check.json"],
            Command::Sweep => &["sweep.csv", "sweep_summary.json", "sweep_trials.jsonl"],
            Command::Sensitivity => &["sensitivity.csv", "sensitivity.json"],
            Command::BetaStudy => &["beta_study.csv", "beta_study.json"],
        }
    }
}

/// Artifacts held in memory until the run succeeds, then written together.
struct Outputs {
    files: Vec<(&'static str, Vec<u8>)>,
    exit: i32,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), exit: 0 }
    }

    fn add(&mut self, name: &'static str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name, bytes.into()));
    }

    fn json<T: Serialize>(&mut self, name: &'static str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::AllRestartsFailed { .. } => EXIT_ALL_RESTARTS_FAILED,
        _ => EXIT_VIOLATION,
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let common = &cli.common;
    let mut config = Config::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.optimizer.seed = seed;
    }
    let out = &common.out;
    if !common.force {
        for name in cli.command.artifacts().iter().chain(["manifest.json"].iter()) {
            if out.join(name).exists() {
                return Err(Error::InvalidArgument(format!(
                    "{} exists; pass --force to overwrite",
                    out.join(name).display()
                )));
            }
        }
    }
    let outputs = match common.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| dispatch(&cli.command, &config, common.strict))?,
        None => dispatch(&cli.command, &config, common.strict)?,
    };
    write_outputs(out, cli.command.name(), &config, &outputs)?;
    Ok(outputs.exit)
}

fn write_outputs(out: &Path, command: &str, config: &Config, outputs: &Outputs) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (name, bytes) in &outputs.files {
        std::fs::write(out.join(name), bytes)?;
    }
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config.hash(),
        "seed": config.seed,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;
    Ok(())
}

fn dispatch(command: &Command, config: &Config, strict: bool) -> Result<Outputs> {
    match command {
        Command::Optimize => cmd_optimize(config, strict),
        Command::Simulate => cmd_simulate(config),
        Command::TheoremCheck { self_test } => cmd_theorem_check(config, *self_test),
        Command::Sweep => cmd_sweep(config, strict),
        Command::Sensitivity => cmd_sensitivity(config, strict),
        Command::BetaStudy => cmd_beta_study(config),
    }
}

fn series_csv(times: &[f64], columns: &[(&str, &[f64])]) -> String {
    let mut s = String::from("time");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (i, t) in times.iter().enumerate() {
        let _ = write!(s, "{t:e}");
        for (_, values) in columns {
            let _ = write!(s, ",{:e}", values[i]);
        }
        s.push('\n');
    }
    s
}

fn fit_csv(result: &OptimizationResult, config: &Config, grid: TimeGrid) -> Result<(String, f64)> {
    let signals = &config.signals;
    let (fit, err) = result.evaluate_fit(&signals.input, &signals.target, grid)?;
    let target = grid.sample(&signals.target);
    Ok((series_csv(&grid.times(), &[("target", &target), ("fit", &fit)]), err))
}

/// Optimise the spectrum of the configured reservoir, keeping its input
/// mask in modal coordinates.
fn optimize_configured(config: &Config, strict: bool) -> Result<(OptimizationResult, Outputs)> {
    let topology = config.topology()?;
    let (modal, v) = decouple(&topology)?;
    let mut opt = config.optimizer.clone();
    opt.n_modes = topology.n();
    opt.gamma = topology.gamma();
    let result = optimize(&opt, &config.signals.input, &config.signals.target, modal.mask())?;
    let failed = result.restart_history.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        log::warn!("{failed} of {} restarts did not converge", opt.restarts);
        if strict {
            return Err(Error::InvalidArgument(format!("{failed} restarts did not converge (--strict)")));
        }
    }
    let mut outputs = Outputs::new();
    outputs.add("topology.json", topology.to_json()? + "\n");
    outputs.add("optimized_topology.json", result.coupled(&v, topology.mask())?.to_json()? + "\n");
    Ok((result, outputs))
}

fn cmd_optimize(config: &Config, strict: bool) -> Result<Outputs> {
    let (result, mut outputs) = optimize_configured(config, strict)?;
    let (train_csv, nrmse_train) = fit_csv(&result, config, config.reservoir.train_grid()?)?;
    let (test_csv, nrmse_test) = fit_csv(&result, config, config.reservoir.test_grid()?)?;
    outputs.json(
        "optimization.json",
        &json!({
            "lambdas": result.lambdas,
            "kappa": result.kappa,
            "lowest_error": result.lowest_error,
            "restarts": result.restart_history,
            "best_restart": result.best_restart,
            "mask": result.mask,
            "gamma": result.gamma,
            "magnitude": rows(&result.magnitude),
            "phase": rows(&result.phase),
            "nrmse_train": nrmse_train,
            "nrmse_test": nrmse_test,
        }),
    )?;
    outputs.add("fit_train.csv", train_csv);
    outputs.add("fit_test.csv", test_csv);
    println!("nrmse_train={nrmse_train:e} nrmse_test={nrmse_test:e} lowest_error={:e}", result.lowest_error);
    Ok(outputs)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn cmd_simulate(config: &Config) -> Result<Outputs> {
    let topology = config.topology()?;
    let res = &config.reservoir;
    let grid = TimeGrid::new(-(res.washout as f64) * res.tau, res.tau, res.train_steps)?;
    let opts = SimulationOptions::linear().activation(res.activation);
    let states = simulate(&topology, &config.signals.input, grid, &DVector::zeros(topology.n()), opts)?
        .skip_rows(res.washout)?;
    let mut outputs = Outputs::new();
    let mut csv = Vec::new();
    states.write_csv(&mut csv)?;
    outputs.add("states.csv", csv);
    let times = states.grid.times();
    let input = states.grid.sample(&config.signals.input);
    outputs.add("input.csv", series_csv(&times, &[("value", &input)]));
    outputs.add("topology.json", topology.to_json()? + "\n");
    println!("simulated {} nodes over {} rows after a washout of {}", topology.n(), states.rows(), res.washout);
    Ok(outputs)
}

fn cmd_theorem_check(config: &Config, self_test: bool) -> Result<Outputs> {
    let tc = &config.theorem;
    if tc.instances == 0 {
        log::warn!("theorem check with zero instances passes vacuously");
    }
    let report = run_theorem_check(tc, &config.signals.input, &config.signals.target, config.seed, self_test)?;
    for r in &report.coupled {
        let t = &r.report;
        println!(
            "coupled #{:<3} n={:<3} eps_coupled={:e} eps_decoupled={:e} kappa_residual={:e} {}",
            r.index,
            t.n,
            t.eps_coupled,
            t.eps_decoupled,
            t.kappa_transform_residual,
            if r.passed { "ok" } else { "VIOLATION" }
        );
    }
    for r in &report.modal {
        let t = &r.report;
        println!(
            "modal   #{:<3} n={:<3} k={} nrmse_time={:e} nrmse_freq={:e} deviation={:e} kappa_deviation={:e} {}",
            r.index,
            t.n,
            t.k,
            t.nrmse_time,
            t.nrmse_frequency,
            t.nrmse_relative_deviation,
            t.kappa_relative_deviation,
            if r.passed { "ok" } else { "VIOLATION" }
        );
    }
    println!("{} violations", report.violations);
    let mut outputs = Outputs::new();
    outputs.json("theorem_check.json", &report)?;
    if report.violations > 0 {
        outputs.exit = EXIT_VIOLATION;
    }
    Ok(outputs)
}

fn cmd_sweep(config: &Config, strict: bool) -> Result<Outputs> {
    let spec = config.benchmark.scenario(config.seed);
    let report = run_sweep(&spec, &config.benchmark.settings, &config.optimizer)?;
    let mut outputs = Outputs::new();
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    outputs.add("sweep.csv", csv);
    let mut lines = Vec::new();
    report.write_json_lines(&mut lines)?;
    outputs.add("sweep_trials.jsonl", lines);
    outputs.json(
        "sweep_summary.json",
        &json!({
            "mode": report.mode,
            "sweep_var": report.sweep_var,
            "fixed_value": report.fixed_value,
            "seed": report.seed,
            "cells": report.cells,
        }),
    )?;
    for c in &report.cells {
        println!(
            "{}={:<4} {:<14} train {:.4e} ± {:.2e}  test {:.4e} ± {:.2e}{}",
            report.sweep_var,
            c.sweep_value,
            c.method.name(),
            c.mean_train,
            c.std_train,
            c.mean_test,
            c.std_test,
            if c.failures > 0 { format!("  ({} failed)", c.failures) } else { String::new() }
        );
    }
    if strict && report.cells.iter().any(|c| c.failures > 0) {
        eprintln!("error: some trials failed (--strict)");
        outputs.exit = EXIT_VIOLATION;
    }
    Ok(outputs)
}

fn cmd_sensitivity(config: &Config, strict: bool) -> Result<Outputs> {
    let (result, _) = optimize_configured(config, strict)?;
    let opt = crate::optimizer::OptimizerConfig {
        n_modes: result.lambdas.len(),
        gamma: result.gamma,
        ..config.optimizer.clone()
    };
    let problem = Problem::new(&opt, &config.signals.input, &config.signals.target, &result.mask)?;
    let sc = &config.benchmark.sensitivity;
    let study = sensitivity_study(
        &problem,
        &result.lambdas,
        &sc.epsilons,
        sc.trials,
        crate::rng::derive_seed(config.seed, "cli.sensitivity", 0),
        config.reservoir.train_grid()?,
    )?;
    let mut csv = String::from("epsilon,trial,nrmse\n");
    for row in &study.rows {
        for (t, v) in row.values.iter().enumerate() {
            let _ = writeln!(csv, "{:e},{t},{v:e}", row.epsilon);
        }
        println!("epsilon={:<8} mean_nrmse={:.4e} std={:.2e}", row.epsilon, row.mean_nrmse, row.std_nrmse);
    }
    println!("unperturbed nrmse={:.4e}", study.optimum_nrmse);
    let mut outputs = Outputs::new();
    outputs.add("sensitivity.csv", csv);
    outputs.json("sensitivity.json", &json!({ "lambdas": result.lambdas, "study": study }))?;
    Ok(outputs)
}

fn cmd_beta_study(config: &Config) -> Result<Outputs> {
    let bs = &config.benchmark.beta_study;
    let cells = beta_weight_study(
        &bs.beta1_values,
        &bs.beta2_values,
        &config.signals.input,
        &config.signals.target,
        &config.optimizer,
        bs.trials,
        config.seed,
    )?;
    let mut csv = String::from("beta1,beta2,trial,error\n");
    for c in &cells {
        for (t, e) in c.errors.iter().enumerate() {
            let _ = writeln!(csv, "{:e},{:e},{t},{e:e}", c.beta1, c.beta2);
        }
        println!("beta1={:<8e} beta2={:<8e} mean_error={:.4e}", c.beta1, c.beta2, c.mean_error);
    }
    let mut outputs = Outputs::new();
    outputs.add("beta_study.csv", csv);
    outputs.json("beta_study.json", &cells)?;
    Ok(outputs)
}
