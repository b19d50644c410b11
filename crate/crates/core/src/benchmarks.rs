//! Comparative experiments: the optimised linear reservoir against a random
//! linear reservoir and tanh/ReLU nonlinear reservoirs, plus the
//! eigenvalue-sensitivity and cost-weight studies.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{evaluate_readout, optimize, perturb, upper_bound, OptimizerConfig, Problem};
use crate::regression::{nrmse, ridge_fit};
use crate::reservoir::{
    generate_echo_state_topology, generate_random_topology, simulate, Activation, ModalReservoir,
    SimulationOptions, TimeGrid,
};
use crate::rng;
use crate::signals::{MultiSineSignal, Tone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OptimizedLrc,
    RandomLrc,
    NlrcTanh,
    NlrcRelu,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OptimizedLrc, Method::RandomLrc, Method::NlrcTanh, Method::NlrcRelu];

    pub fn name(self) -> &'static str {
        match self {
            Method::OptimizedLrc => "optimized_lrc",
            Method::RandomLrc => "random_lrc",
            Method::NlrcTanh => "nlrc_tanh",
            Method::NlrcRelu => "nlrc_relu",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-trial random task: log-uniform frequencies with a minimum spacing,
/// uniform amplitudes and phases, drawn independently for input and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalGenerator {
    pub freq_low: f64,
    pub freq_high: f64,
    pub min_separation: f64,
    pub amp_low: f64,
    pub amp_high: f64,
}

impl Default for SignalGenerator {
    fn default() -> Self {
        Self {
            freq_low: 0.5,
            freq_high: 5.0,
            min_separation: 0.2,
            amp_low: 0.5,
            amp_high: 2.5,
        }
    }
}

impl SignalGenerator {
    pub fn draw<R: Rng>(&self, k: usize, rng: &mut R) -> Result<(MultiSineSignal, MultiSineSignal)> {
        if !(0.0 < self.freq_low && self.freq_low < self.freq_high && self.amp_low <= self.amp_high) {
            return Err(Error::InvalidArgument("invalid signal generator ranges".into()));
        }
        let (lo, hi) = (self.freq_low.ln(), self.freq_high.ln());
        let mut omegas: Vec<f64> = Vec::with_capacity(k);
        let mut attempts = 0;
        while omegas.len() < k {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {k} frequencies {} apart in [{}, {}]",
                    self.min_separation, self.freq_low, self.freq_high
                )));
            }
            let w = rng.gen_range(lo..=hi).exp();
            if omegas.iter().all(|o| (o - w).abs() >= self.min_separation) {
                omegas.push(w);
            }
        }
        let tones = |rng: &mut R| -> Result<MultiSineSignal> {
            MultiSineSignal::new(
                omegas
                    .iter()
                    .map(|&w| {
                        let a = rng.gen_range(self.amp_low..=self.amp_high);
                        // (-pi, pi]
                        let phase = PI - 2.0 * PI * rng.gen::<f64>();
                        Tone::new(w, a, phase)
                    })
                    .collect(),
            )
        };
        let u = tones(rng)?;
        let y = tones(rng)?;
        Ok((u, y))
    }
}

/// Everything about a benchmark run other than the optimiser and the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub gamma: f64,
    pub tau: f64,
    pub train_steps: usize,
    pub test_steps: usize,
    pub washout: usize,
    /// Ridge parameter of the time-domain readouts of the baselines.
    pub baseline_beta: f64,
    pub edge_prob: f64,
    pub weighted: bool,
    /// Largest adjacency eigenvalue of the random linear baseline.
    pub random_max_eig: f64,
    /// Spectral radius of the nonlinear baselines.
    pub spectral_radius: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            gamma: 6.0,
            tau: 0.01,
            train_steps: 3000,
            test_steps: 3000,
            washout: 500,
            baseline_beta: 1e-8,
            edge_prob: 0.5,
            weighted: true,
            random_max_eig: -0.1,
            spectral_radius: 0.9,
        }
    }
}

impl BenchmarkSettings {
    pub fn train_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.tau, self.train_steps)
    }

    pub fn test_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.train_steps as f64 * self.tau, self.tau, self.test_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub nrmse_train: f64,
    pub nrmse_test: f64,
}

/// Train one method on `u -> y` and score it on the shared windows.
///
/// The optimised reservoir is scored on its transient-free response. The
/// baselines are simulated from rest starting `washout` steps before the
/// training window and read out with a bias column.
pub fn run_method(
    method: Method,
    n: usize,
    u: &MultiSineSignal,
    y: &MultiSineSignal,
    seed: u64,
    settings: &BenchmarkSettings,
    optimizer: &OptimizerConfig,
) -> Result<MethodScore> {
    if n == 0 {
        return Err(Error::InvalidArgument("reservoir needs at least one node".into()));
    }
    if !u.shares_frequencies(y) {
        return Err(Error::FrequencyMismatch);
    }
    let train = settings.train_grid()?;
    let test = settings.test_grid()?;
    match method {
        Method::OptimizedLrc => {
            let mut mask_rng = rng::stream(seed, "benchmark.mask", 0);
            let mask: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut mask_rng)).collect();
            let config = OptimizerConfig {
                n_modes: n,
                gamma: settings.gamma,
                seed: rng::derive_seed(seed, "benchmark.optimizer", 0),
                ..optimizer.clone()
            };
            let result = optimize(&config, u, y, &mask)?;
            let (_, nrmse_train) = result.evaluate_fit(u, y, train)?;
            let (_, nrmse_test) = result.evaluate_fit(u, y, test)?;
            Ok(MethodScore { nrmse_train, nrmse_test })
        }
        _ => {
            let topo_seed = rng::derive_seed(seed, "benchmark.topology", 0);
            let (topology, activation) = match method {
                Method::RandomLrc => (
                    generate_random_topology(n, settings.edge_prob, settings.weighted, settings.random_max_eig, settings.gamma, topo_seed)?,
                    Activation::Identity,
                ),
                Method::NlrcTanh | Method::NlrcRelu => (
                    generate_echo_state_topology(n, settings.edge_prob, settings.weighted, settings.spectral_radius, settings.gamma, topo_seed)?,
                    if method == Method::NlrcTanh { Activation::Tanh } else { Activation::Relu },
                ),
                Method::OptimizedLrc => unreachable!(),
            };
            let steps = settings.washout + settings.train_steps + settings.test_steps;
            let grid = TimeGrid::new(-(settings.washout as f64) * settings.tau, settings.tau, steps)?;
            let opts = SimulationOptions::linear().activation(activation).with_bias();
            let states = simulate(&topology, u, grid, &DVector::zeros(n), opts)?;
            let train_states = states.rows_range(settings.washout, settings.train_steps)?;
            let test_states = states.rows_range(settings.washout + settings.train_steps, settings.test_steps)?;
            let y_train = DVector::from_vec(train.sample(y));
            let readout = ridge_fit(&train_states, &y_train, settings.baseline_beta)?;
            let fit_train = &train_states.states * &readout.kappa;
            let fit_test = &test_states.states * &readout.kappa;
            Ok(MethodScore {
                nrmse_train: nrmse(fit_train.as_slice(), y_train.as_slice())?,
                nrmse_test: nrmse(fit_test.as_slice(), &test.sample(y))?,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Fixed node count, varying number of frequencies.
    FixNodesVaryFreqs,
    /// Fixed number of frequencies, varying node count.
    FixFreqsVaryNodes,
}

impl SweepMode {
    pub fn sweep_var(self) -> &'static str {
        match self {
            SweepMode::FixNodesVaryFreqs => "n_freqs",
            SweepMode::FixFreqsVaryNodes => "n_nodes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: SweepMode,
    pub fixed_value: usize,
    pub sweep_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub signals: SignalGenerator,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            mode: SweepMode::FixFreqsVaryNodes,
            fixed_value: 3,
            sweep_values: vec![5, 10, 20, 50],
            trials: 10,
            seed: 0,
            methods: Method::ALL.to_vec(),
            signals: SignalGenerator::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() || self.sweep_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("sweep_values must be non-empty and strictly ascending".into()));
        }
        if self.sweep_values[0] == 0 || self.fixed_value == 0 {
            return Err(Error::InvalidArgument("sweep and fixed values must be positive".into()));
        }
        if self.trials == 0 || self.methods.is_empty() {
            return Err(Error::InvalidArgument("need at least one trial and one method".into()));
        }
        Ok(())
    }

    /// `(n_nodes, n_freqs)` at a sweep point.
    pub fn sizes(&self, value: usize) -> (usize, usize) {
        match self.mode {
            SweepMode::FixNodesVaryFreqs => (self.fixed_value, value),
            SweepMode::FixFreqsVaryNodes => (value, self.fixed_value),
        }
    }

    /// Seed of one `(sweep point, trial)` pair, shared by every method.
    pub fn trial_seed(&self, value: usize, trial: usize) -> u64 {
        rng::derive_seed(self.seed, &format!("benchmark.{}.{value}", self.mode.sweep_var()), trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub sweep_var: String,
    pub sweep_value: usize,
    pub trial: usize,
    pub nrmse_train: f64,
    pub nrmse_test: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub sweep_value: usize,
    pub mean_train: f64,
    pub std_train: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub trials: usize,
    /// Trials that errored; their values are excluded from the statistics.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub mode: SweepMode,
    pub sweep_var: String,
    pub fixed_value: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
}

impl BenchmarkReport {
    pub fn cell(&self, method: Method, value: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.sweep_value == value)
    }

    /// Long-format CSV, one row per trial and method.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,sweep_var,sweep_value,trial,nrmse_train,nrmse_test")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e}",
                r.method, r.sweep_var, r.sweep_value, r.trial, r.nrmse_train, r.nrmse_test
            )?;
        }
        Ok(())
    }

    /// One JSON object per trial record.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Sum by recursive halving; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and sample standard deviation; one value has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

pub fn run_sweep(spec: &ScenarioSpec, settings: &BenchmarkSettings, optimizer: &OptimizerConfig) -> Result<BenchmarkReport> {
    spec.validate()?;
    let sweep_var = spec.mode.sweep_var().to_string();
    let jobs: Vec<(usize, usize)> = spec
        .sweep_values
        .iter()
        .flat_map(|&v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(value, trial)| {
            let seed = spec.trial_seed(value, trial);
            let (n, k) = spec.sizes(value);
            let signals = spec.signals.draw(k, &mut rng::stream(seed, "benchmark.signals", 0));
            spec.methods
                .iter()
                .map(|&method| {
                    let outcome = signals
                        .as_ref()
                        .map_err(|e| Error::InvalidArgument(e.to_string()))
                        .and_then(|(u, y)| run_method(method, n, u, y, seed, settings, optimizer));
                    let (score, error) = match outcome {
                        Ok(s) => (s, None),
                        Err(e) => (
                            MethodScore { nrmse_train: f64::NAN, nrmse_test: f64::NAN },
                            Some(e.to_string()),
                        ),
                    };
                    TrialRecord {
                        method,
                        sweep_var: sweep_var.clone(),
                        sweep_value: value,
                        trial,
                        nrmse_train: score.nrmse_train,
                        nrmse_test: score.nrmse_test,
                        error,
                    }
                })
                .collect()
        })
        .collect();
    let records: Vec<TrialRecord> = per_job.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &value in &spec.sweep_values {
        for &method in &spec.methods {
            let ok: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == method && r.sweep_value == value && r.error.is_none())
                .collect();
            let train: Vec<f64> = ok.iter().map(|r| r.nrmse_train).collect();
            let test: Vec<f64> = ok.iter().map(|r| r.nrmse_test).collect();
            let (mean_train, std_train) = mean_std(&train);
            let (mean_test, std_test) = mean_std(&test);
            let failures = spec.trials - ok.len();
            if failures > 0 {
                log::warn!("{method} at {sweep_var}={value}: {failures} of {} trials failed", spec.trials);
            }
            cells.push(CellSummary {
                method,
                sweep_value: value,
                mean_train,
                std_train,
                mean_test,
                std_test,
                trials: spec.trials,
                failures,
            });
        }
    }
    Ok(BenchmarkReport {
        mode: spec.mode,
        sweep_var,
        fixed_value: spec.fixed_value,
        seed: spec.seed,
        cells,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub epsilon: f64,
    pub mean_nrmse: f64,
    pub std_nrmse: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityStudy {
    /// Training NRMSE of the unperturbed spectrum under the same refit.
    pub optimum_nrmse: f64,
    pub rows: Vec<SensitivityRow>,
}

/// Perturb an optimised spectrum, refit the readout for each draw, and
/// report the training NRMSE of the steady-state fit.
pub fn sensitivity_study(
    problem: &Problem,
    lambdas_opt: &[f64],
    epsilons: &[f64],
    trials: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<SensitivityStudy> {
    if !problem.is_feasible(lambdas_opt) {
        return Err(Error::InfeasibleLambdas);
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let ub = upper_bound(problem.gamma, problem.omega_max(), problem.margin);
    let score = |lambdas: &[f64]| -> Result<f64> {
        let sys = problem.system(lambdas)?;
        let kappa = problem.optimal_kappa(&sys)?;
        let modal = ModalReservoir::new(lambdas.to_vec(), problem.mask.clone(), problem.gamma)?;
        Ok(evaluate_readout(&modal, &kappa, &problem.input, &problem.target, grid)?.1)
    };
    let optimum_nrmse = score(lambdas_opt)?;
    let rows = epsilons
        .iter()
        .enumerate()
        .map(|(ei, &eps)| {
            let values = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let s = rng::derive_seed(seed, &format!("sensitivity.{ei}"), t as u64);
                    score(&perturb(lambdas_opt, eps, ub, s)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean_nrmse, std_nrmse) = mean_std(&values);
            Ok(SensitivityRow {
                epsilon: eps,
                mean_nrmse,
                std_nrmse,
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityStudy { optimum_nrmse, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCell {
    pub beta1: f64,
    pub beta2: f64,
    pub mean_error: f64,
    pub errors: Vec<f64>,
}

/// Full factorial grid of `optimize` runs over `(beta1, beta2)`; each trial
/// draws its own input mask and restart seed, shared across the grid.
pub fn beta_weight_study(
    beta1_values: &[f64],
    beta2_values: &[f64],
    u: &MultiSineSignal,
    y: &MultiSineSignal,
    base: &OptimizerConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<BetaCell>> {
    if beta1_values.is_empty() || beta2_values.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument("beta grids and trial count must be non-empty".into()));
    }
    let masks: Vec<Vec<f64>> = (0..trials)
        .map(|t| {
            let mut r = rng::stream(seed, "beta_study.mask", t as u64);
            (0..base.n_modes).map(|_| StandardNormal.sample(&mut r)).collect()
        })
        .collect();
    let grid: Vec<(f64, f64)> = beta1_values
        .iter()
        .flat_map(|&b1| beta2_values.iter().map(move |&b2| (b1, b2)))
        .collect();
    grid.iter()
        .map(|&(beta1, beta2)| {
            let errors = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let config = OptimizerConfig {
                        beta1,
                        beta2,
                        seed: rng::derive_seed(seed, "beta_study.optimizer", t as u64),
                        ..base.clone()
                    };
                    Ok(optimize(&config, u, y, &masks[t])?.lowest_error)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(BetaCell {
                beta1,
                beta2,
                mean_error: mean_std(&errors).0,
                errors,
            })
        })
        .collect()
}
