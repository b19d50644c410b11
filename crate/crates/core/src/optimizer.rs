//! Eigenvalue-spectrum design for a linear reservoir.
//!
//! For a fixed spectrum the readout enters the cost quadratically, so it is
//! eliminated in closed form (a weighted ridge solve). What remains is a
//! smooth function of the eigenvalues alone, minimised by a projected
//! limited-memory quasi-Newton method inside the box given by the stability
//! and cut-off constraints, from many random starting spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::regression::{build_frequency_system, weighted_frequency_fit, FrequencyDesignMatrix};
use crate::reservoir::{
    steady_state_series, transfer_response, ModalReservoir, ReservoirTopology, TimeGrid,
};
use crate::rng;
use crate::signals::MultiSineSignal;

/// Smallest pairwise eigenvalue gap used in the spread penalty.
pub const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n_modes: usize,
    /// Readout-norm penalty weight.
    pub beta1: f64,
    /// Eigenvalue-spread penalty weight.
    pub beta2: f64,
    pub gamma: f64,
    pub restarts: usize,
    pub lambda_init_low: f64,
    pub lambda_init_high: f64,
    pub constraint_margin: f64,
    pub max_inner_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Weight each frequency's residual by `1/omega`; `false` weights all by one.
    pub frequency_weighting: bool,
    /// The lower box bound sits this far below `lambda_init_low`.
    pub lower_slack: f64,
    pub gradient: GradientMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_modes: 10,
            beta1: 1e-7,
            beta2: 1e-1,
            gamma: 6.0,
            restarts: 50,
            lambda_init_low: -20.0,
            lambda_init_high: 0.0,
            constraint_margin: 1e-6,
            max_inner_iters: 500,
            grad_tol: 1e-8,
            seed: 0,
            frequency_weighting: true,
            lower_slack: 5.0,
            gradient: GradientMode::Analytic,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_modes == 0 {
            return bad("n_modes must be at least 1".into());
        }
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return bad("beta1 and beta2 must be non-negative".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive".into());
        }
        if !(self.lambda_init_low < self.lambda_init_high && self.lambda_init_high <= 0.0) {
            return bad(format!(
                "need lambda_init_low < lambda_init_high <= 0, got [{}, {}]",
                self.lambda_init_low, self.lambda_init_high
            ));
        }
        if !(self.constraint_margin > 0.0 && self.lower_slack >= 0.0 && self.grad_tol > 0.0) {
            return bad("constraint_margin and grad_tol must be positive".into());
        }
        Ok(())
    }
}

/// `H = N / sum_{j != z} 1/|lambda_j - lambda_z|` over ordered pairs, gaps
/// floored at [`GAP_FLOOR`].
pub fn harmonic_spread(lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidArgument("spread needs at least two eigenvalues".into()));
    }
    Ok(lambdas.len() as f64 / inverse_gap_sum(lambdas))
}

fn inverse_gap_sum(lambdas: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (j, a) in lambdas.iter().enumerate() {
        for b in &lambdas[j + 1..] {
            sum += 2.0 / (a - b).abs().max(GAP_FLOOR);
        }
    }
    sum
}

/// `beta2 / H`, zero for a single mode.
fn spread_penalty(lambdas: &[f64], beta2: f64) -> f64 {
    if lambdas.len() < 2 || beta2 == 0.0 {
        0.0
    } else {
        beta2 * inverse_gap_sum(lambdas) / lambdas.len() as f64
    }
}

fn spread_penalty_gradient(lambdas: &[f64], beta2: f64, grad: &mut [f64]) {
    let n = lambdas.len();
    if n < 2 || beta2 == 0.0 {
        return;
    }
    let scale = 2.0 * beta2 / n as f64;
    for i in 0..n {
        for z in 0..n {
            if z == i {
                continue;
            }
            let d = lambdas[i] - lambdas[z];
            if d.abs() > GAP_FLOOR {
                grad[i] -= scale * d.signum() / (d * d);
            }
        }
    }
}

/// Upper bound on every eigenvalue: `lambda <= 0` and
/// `omega_max + gamma (lambda - 1) <= -margin`.
pub fn upper_bound(gamma: f64, omega_max: f64, margin: f64) -> f64 {
    let mut ub = 0.0f64.min(1.0 - (omega_max + margin) / gamma);
    while !(omega_max + gamma * (ub - 1.0) <= -margin) {
        ub = next_down(ub);
    }
    ub
}

fn next_down(x: f64) -> f64 {
    if x == 0.0 {
        -f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

pub fn feasible(lambdas: &[f64], gamma: f64, omega_max: f64, margin: f64) -> bool {
    lambdas
        .iter()
        .all(|&l| l <= 0.0 && omega_max + gamma * (l - 1.0) <= -margin)
}

/// The three cost terms for an explicit readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub weighted_error_sq: f64,
    pub kappa_penalty: f64,
    pub spread_penalty: f64,
}

/// The fixed parts of the design problem: signals, gain, and input mask.
#[derive(Debug, Clone)]
pub struct Problem {
    pub input: MultiSineSignal,
    pub target: MultiSineSignal,
    pub mask: Vec<f64>,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub frequency_weighting: bool,
    pub margin: f64,
}

impl Problem {
    pub fn new(config: &OptimizerConfig, input: &MultiSineSignal, target: &MultiSineSignal, mask: &[f64]) -> Result<Self> {
        if !input.shares_frequencies(target) || input.is_empty() {
            return Err(Error::FrequencyMismatch);
        }
        if mask.len() != config.n_modes {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries for {} modes",
                mask.len(),
                config.n_modes
            )));
        }
        Ok(Self {
            input: input.clone(),
            target: target.clone(),
            mask: mask.to_vec(),
            gamma: config.gamma,
            beta1: config.beta1,
            beta2: config.beta2,
            frequency_weighting: config.frequency_weighting,
            margin: config.constraint_margin,
        })
    }

    pub fn omega_max(&self) -> f64 {
        self.input.max_omega()
    }

    pub fn modal(&self, lambdas: &[f64]) -> Result<ModalReservoir> {
        ModalReservoir::new(lambdas.to_vec(), self.mask.clone(), self.gamma)
    }

    pub fn system(&self, lambdas: &[f64]) -> Result<FrequencyDesignMatrix> {
        let mut sys = build_frequency_system(&self.modal(lambdas)?, &self.input, &self.target)?;
        if !self.frequency_weighting {
            sys.weights.iter_mut().for_each(|w| *w = 1.0);
        }
        Ok(sys)
    }

    pub fn is_feasible(&self, lambdas: &[f64]) -> bool {
        feasible(lambdas, self.gamma, self.omega_max(), self.margin)
    }

    /// All cost terms at an explicit `(lambda, kappa)`.
    pub fn cost(&self, lambdas: &[f64], kappa: &DVector<f64>) -> Result<CostBreakdown> {
        if !self.is_feasible(lambdas) {
            return Err(Error::InfeasibleLambdas);
        }
        if kappa.len() != lambdas.len() {
            return Err(Error::InvalidArgument("kappa and lambda lengths differ".into()));
        }
        let sys = self.system(lambdas)?;
        let weighted_error_sq = sys.weighted_error_sq(kappa);
        let kappa_penalty = self.beta1 * kappa.norm_squared();
        let spread = spread_penalty(lambdas, self.beta2);
        Ok(CostBreakdown {
            total: weighted_error_sq + kappa_penalty + spread,
            weighted_error_sq,
            kappa_penalty,
            spread_penalty: spread,
        })
    }

    /// Readout minimising the first two cost terms for this spectrum.
    pub fn optimal_kappa(&self, sys: &FrequencyDesignMatrix) -> Result<DVector<f64>> {
        Ok(weighted_frequency_fit(sys, self.beta1)?.kappa)
    }

    /// Cost with the readout eliminated. Infeasible spectra are not checked
    /// here; callers keep iterates inside the box.
    pub fn reduced(&self, lambdas: &[f64]) -> Result<ReducedEval> {
        let sys = self.system(lambdas)?;
        let kappa = self.optimal_kappa(&sys)?;
        let weighted_error_sq = sys.weighted_error_sq(&kappa);
        let value = weighted_error_sq
            + self.beta1 * kappa.norm_squared()
            + spread_penalty(lambdas, self.beta2);
        Ok(ReducedEval {
            value,
            weighted_error_sq,
            kappa,
            sys,
        })
    }

    /// Gradient of the reduced cost. The readout is optimal, so only the
    /// explicit dependence of the design matrix on each eigenvalue counts.
    pub fn reduced_gradient(&self, lambdas: &[f64], eval: &ReducedEval) -> Vec<f64> {
        let sys = &eval.sys;
        let kappa = &eval.kappa;
        let res = sys.residual(kappa);
        let gamma = self.gamma;
        let mut grad = vec![0.0; lambdas.len()];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, tone) in self.input.tones().iter().enumerate() {
                let den = Complex64::new(gamma * (1.0 - lambdas[i]), tone.omega);
                let dt = Complex64::new(gamma * gamma * self.mask[i], 0.0) / (den * den);
                let dz = Complex64::from_polar(tone.amplitude, tone.phase) * dt;
                acc += sys.weights[k] * (res[2 * k] * dz.re + res[2 * k + 1] * dz.im);
            }
            *g = 2.0 * kappa[i] * acc;
        }
        spread_penalty_gradient(lambdas, self.beta2, &mut grad);
        grad
    }

    /// Central differences of the reduced cost with step `h`.
    pub fn finite_difference_gradient(&self, lambdas: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut x = lambdas.to_vec();
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let fp = self.reduced(&x)?.value;
            x[i] = orig - h;
            let fm = self.reduced(&x)?.value;
            x[i] = orig;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        Ok(grad)
    }
}

/// Reduced cost at one spectrum together with the readout that attains it.
#[derive(Debug, Clone)]
pub struct ReducedEval {
    pub value: f64,
    pub weighted_error_sq: f64,
    pub kappa: DVector<f64>,
    pub sys: FrequencyDesignMatrix,
}

/// Outcome of one local solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub init_lambdas: Vec<f64>,
    /// Weighted error `sqrt(sum W (e_cos^2 + e_sin^2))` at the start, with its
    /// optimal readout.
    pub initial_error: f64,
    pub final_error: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Lowest error over this and all earlier converged restarts.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Optimised eigenvalues, ascending; `kappa` and the columns of
    /// `magnitude`/`phase` follow the same order, as does `mask`.
    pub lambdas: Vec<f64>,
    pub kappa: Vec<f64>,
    pub mask: Vec<f64>,
    /// Position of each reported mode in the caller's mask.
    pub mode_index: Vec<usize>,
    pub gamma: f64,
    pub magnitude: DMatrix<f64>,
    pub phase: DMatrix<f64>,
    pub lowest_error: f64,
    pub best_restart: usize,
    pub restart_history: Vec<RestartRecord>,
}

impl OptimizationResult {
    pub fn modal(&self) -> Result<ModalReservoir> {
        ModalReservoir::new(self.lambdas.clone(), self.mask.clone(), self.gamma)
    }

    /// The coupled reservoir `V diag(lambda) V^T` with input weights `d`,
    /// where `V` holds the eigenvectors whose modal gains were `V^T d`.
    pub fn coupled(&self, v: &DMatrix<f64>, d: &DVector<f64>) -> Result<ReservoirTopology> {
        let n = self.lambdas.len();
        if v.shape() != (n, n) || d.len() != n {
            return Err(Error::InvalidArgument("eigenvector matrix size does not match".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        for (i, &l) in self.lambdas.iter().enumerate() {
            let col = v.column(self.mode_index[i]);
            a += (&col * col.transpose()) * l;
        }
        ReservoirTopology::new(a, d.clone(), self.gamma)
    }

    pub fn kappa_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.kappa)
    }

    /// The time-domain fit `sum_i kappa_i q_i(t)` from transient-free mode
    /// responses on `grid`, and its NRMSE against `target`.
    pub fn evaluate_fit(&self, input: &MultiSineSignal, target: &MultiSineSignal, grid: TimeGrid) -> Result<(Vec<f64>, f64)> {
        evaluate_readout(&self.modal()?, &self.kappa_vector(), input, target, grid)
    }
}

/// Steady-state fit of a modal reservoir with readout `kappa`, and its NRMSE.
pub fn evaluate_readout(
    modal: &ModalReservoir,
    kappa: &DVector<f64>,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
    grid: TimeGrid,
) -> Result<(Vec<f64>, f64)> {
    let states = steady_state_series(modal, input, grid)?;
    let fit: Vec<f64> = (&states.states * kappa).iter().cloned().collect();
    let reference = grid.sample(target);
    let err = crate::regression::nrmse(&fit, &reference)?;
    Ok((fit, err))
}

struct LocalOutcome {
    lambdas: Vec<f64>,
    eval: ReducedEval,
    iterations: usize,
    converged: bool,
}

struct Bounds {
    lower: f64,
    upper: f64,
}

impl Bounds {
    fn project(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.lower, self.upper);
        }
    }

    /// `P(x - g) - x`, zero exactly at a box-constrained stationary point.
    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .map(|(&xi, &gi)| (xi - gi).clamp(self.lower, self.upper) - xi)
            .collect()
    }

    fn is_pinned(&self, x: f64, g: f64) -> bool {
        (x <= self.lower && g > 0.0) || (x >= self.upper && g < 0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const LBFGS_MEMORY: usize = 10;

/// Projected L-BFGS with an Armijo backtracking search along the projection
/// arc. Directions are built on the free variables only.
fn local_solve(
    problem: &Problem,
    bounds: &Bounds,
    start: &[f64],
    config: &OptimizerConfig,
) -> Result<LocalOutcome> {
    let gradient = |x: &[f64], e: &ReducedEval| -> Result<Vec<f64>> {
        match config.gradient {
            GradientMode::Analytic => Ok(problem.reduced_gradient(x, e)),
            GradientMode::FiniteDifference => problem.finite_difference_gradient(x, 1e-6),
        }
    };
    let mut x = start.to_vec();
    bounds.project(&mut x);
    let mut eval = problem.reduced(&x)?;
    let initial_value = eval.value;
    let mut g = gradient(&x, &eval)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_inner_iters {
        let pg = bounds.projected_gradient(&x, &g);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = x.iter().zip(&g).map(|(&xi, &gi)| !bounds.is_pinned(xi, gi)).collect();
        let gf: Vec<f64> = g.iter().zip(&free).map(|(&gi, &f)| if f { gi } else { 0.0 }).collect();

        // Two-loop recursion on the free components.
        let mut q = gf.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for ((qi, yi), f) in q.iter_mut().zip(y).zip(&free) {
                if *f {
                    *qi -= a * yi;
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        } else {
            let gmax = gf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax > 0.0 {
                q.iter_mut().for_each(|v| *v /= gmax.max(1.0));
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for ((qi, si), f) in q.iter_mut().zip(s).zip(&free) {
                if *f {
                    *qi += (a - b) * si;
                }
            }
        }
        let mut dir: Vec<f64> = q.iter().zip(&free).map(|(&v, &f)| if f { -v } else { 0.0 }).collect();
        if dot(&dir, &g) >= 0.0 {
            memory.clear();
            dir = gf.iter().map(|v| -v).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            bounds.project(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease >= 0.0 && moved.iter().all(|m| *m == 0.0) {
                break;
            }
            if let Ok(e) = problem.reduced(&trial) {
                if e.value.is_finite() && e.value <= eval.value + 1e-4 * decrease.min(0.0) {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, eval_new)) = accepted else {
            if memory.is_empty() {
                // No descent possible at working precision.
                converged = true;
                break;
            }
            memory.clear();
            continue;
        };
        let g_new = gradient(&x_new, &eval_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == LBFGS_MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let improvement = eval.value - eval_new.value;
        stalled = if improvement <= 1e-14 * eval.value.abs().max(1e-300) { stalled + 1 } else { 0 };
        x = x_new;
        eval = eval_new;
        g = g_new;
        if stalled >= 5 {
            converged = true;
            break;
        }
    }
    if !converged && eval.value < initial_value {
        converged = true;
    }
    Ok(LocalOutcome {
        lambdas: x,
        eval,
        iterations,
        converged,
    })
}

fn weighted_error(eval: &ReducedEval) -> f64 {
    eval.weighted_error_sq.max(0.0).sqrt()
}

/// Multi-start eigenvalue optimisation.
///
/// Each restart draws its initial spectrum uniformly from
/// `[lambda_init_low, lambda_init_high]` with its own seed stream and runs an
/// independent local solve. Among converged restarts the lowest weighted
/// error wins; ties keep the earliest. Restarts run in parallel but the
/// result does not depend on scheduling.
pub fn optimize(
    config: &OptimizerConfig,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
    mask: &[f64],
) -> Result<OptimizationResult> {
    config.validate()?;
    let problem = Problem::new(config, input, target, mask)?;
    for (i, c) in mask.iter().enumerate() {
        if c.abs() < 1e-12 {
            log::warn!("mask entry {i} is {c:e}; that mode cannot be driven by the input");
        }
    }
    let bounds = Bounds {
        lower: config.lambda_init_low - config.lower_slack,
        upper: upper_bound(config.gamma, problem.omega_max(), config.constraint_margin),
    };

    let outcomes: Vec<Option<(RestartRecord, LocalOutcome)>> = (0..config.restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = rng::stream(config.seed, "optimizer.restart", index as u64);
            let init: Vec<f64> = (0..config.n_modes)
                .map(|_| rng.gen_range(config.lambda_init_low..=config.lambda_init_high))
                .collect();
            let mut start = init.clone();
            bounds.project(&mut start);
            let initial_error = problem.reduced(&start).map(|e| weighted_error(&e)).ok()?;
            let outcome = local_solve(&problem, &bounds, &start, config).ok()?;
            let record = RestartRecord {
                index,
                init_lambdas: init,
                initial_error,
                final_error: weighted_error(&outcome.eval),
                final_cost: outcome.eval.value,
                iterations: outcome.iterations,
                converged: outcome.converged,
                best_so_far: f64::INFINITY,
            };
            Some((record, outcome))
        })
        .collect();

    let mut history = Vec::with_capacity(config.restarts);
    let mut best: Option<(usize, LocalOutcome)> = None;
    let mut lowest = f64::INFINITY;
    for (index, item) in outcomes.into_iter().enumerate() {
        match item {
            Some((mut record, outcome)) => {
                if record.converged && record.final_error < lowest {
                    lowest = record.final_error;
                    best = Some((index, outcome));
                }
                record.best_so_far = lowest;
                history.push(record);
            }
            None => history.push(RestartRecord {
                index,
                init_lambdas: Vec::new(),
                initial_error: f64::NAN,
                final_error: f64::NAN,
                final_cost: f64::NAN,
                iterations: 0,
                converged: false,
                best_so_far: lowest,
            }),
        }
    }
    let Some((best_restart, outcome)) = best else {
        return Err(Error::AllRestartsFailed {
            restarts: config.restarts,
        });
    };

    let mut order: Vec<usize> = (0..config.n_modes).collect();
    order.sort_by(|&a, &b| outcome.lambdas[a].total_cmp(&outcome.lambdas[b]));
    let lambdas: Vec<f64> = order.iter().map(|&i| outcome.lambdas[i]).collect();
    let kappa: Vec<f64> = order.iter().map(|&i| outcome.eval.kappa[i]).collect();
    let sorted_mask: Vec<f64> = order.iter().map(|&i| mask[i]).collect();
    let modal = ModalReservoir::new(lambdas.clone(), sorted_mask.clone(), config.gamma)?;
    let resp = transfer_response(&modal, &input.omegas())?;
    Ok(OptimizationResult {
        lambdas,
        kappa,
        mask: sorted_mask,
        mode_index: order,
        gamma: config.gamma,
        magnitude: resp.magnitude,
        phase: resp.phase,
        lowest_error: lowest,
        best_restart,
        restart_history: history,
    })
}

/// Shift every eigenvalue by `epsilon_s * delta_i`, `delta_i ~ U(-1, 0)`,
/// then clamp to `upper` so the spectrum stays feasible.
pub fn perturb(lambdas: &[f64], epsilon_s: f64, upper: f64, seed: u64) -> Result<Vec<f64>> {
    if !(epsilon_s >= 0.0 && epsilon_s.is_finite()) {
        return Err(Error::InvalidArgument(format!("perturbation scale {epsilon_s} must be >= 0")));
    }
    let mut rng = rng::seeded(seed);
    Ok(lambdas
        .iter()
        .map(|&l| {
            let delta: f64 = -rng.gen::<f64>();
            (l + epsilon_s * delta).min(upper)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::three_tone_task;
    use crate::regression::ridge_solve;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Brute force over ordered pairs, no shared code with the implementation.
    fn spread_oracle(l: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..l.len() {
            for z in 0..l.len() {
                if j != z {
                    s += 1.0 / (l[j] - l[z]).abs().max(1e-12);
                }
            }
        }
        l.len() as f64 / s
    }

    #[test]
    fn spread_examples() {
        assert_abs_diff_eq!(harmonic_spread(&[0.0, -1.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic_spread(&[0.0, -1.0, -2.0]).unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic_spread(&[0.0, 0.0]).unwrap(), 1e-12, epsilon = 1e-24);
        assert!(harmonic_spread(&[0.0]).is_err());
        let l = [-3.1, -0.2, -7.7, -1.0];
        assert_abs_diff_eq!(harmonic_spread(&l).unwrap(), spread_oracle(&l), epsilon = 1e-14);
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasible(&[0.0], 6.0, 5.0, 1e-6));
        assert!(!feasible(&[0.1], 6.0, 5.0, 1e-6));
        assert!(!feasible(&[0.0], 6.0, 7.0, 1e-6));
        assert!(feasible(&[-0.2], 6.0, 7.0, 1e-6));
        let ub = upper_bound(6.0, 7.0, 1e-6);
        assert!(feasible(&[ub], 6.0, 7.0, 1e-6));
        assert!(ub > -1.0 / 6.0 - 1e-6);
        assert_eq!(upper_bound(6.0, 5.0, 1e-6), 0.0);
    }

    fn problem(beta1: f64, beta2: f64, n: usize) -> Problem {
        let (u, y) = three_tone_task();
        let config = OptimizerConfig {
            n_modes: n,
            beta1,
            beta2,
            ..OptimizerConfig::default()
        };
        let mask: Vec<f64> = (0..n).map(|i| 0.5 + 0.3 * ((i * 7) % 5) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Problem::new(&config, &u, &y, &mask).unwrap()
    }

    #[test]
    fn cost_examples() {
        let p = problem(0.0, 0.0, 3);
        let l = [-0.5, -3.0, -9.0];
        let zero = p.cost(&l, &DVector::zeros(3)).unwrap();
        // With kappa = 0 the residual is -B: sum_k W_k b_k^2.
        let (_, y) = three_tone_task();
        let want: f64 = y.tones().iter().map(|t| t.amplitude.powi(2) / t.omega).sum();
        assert_abs_diff_eq!(zero.total, want, epsilon = 1e-12);

        let p = problem(0.0, 0.1, 3);
        let c = p.cost(&[0.0, -1.0, -2.0], &DVector::zeros(3)).unwrap();
        assert_abs_diff_eq!(c.spread_penalty, 0.1 / 0.6, epsilon = 1e-12);
        assert!(matches!(p.cost(&[0.5, -1.0, -2.0], &DVector::zeros(3)), Err(Error::InfeasibleLambdas)));
    }

    #[test]
    fn exact_readout_gives_zero_cost() {
        let p = problem(0.0, 0.0, 6);
        let l = [-6.0, -4.0, -2.5, -1.2, -0.6, -0.1];
        let sys = p.system(&l).unwrap();
        let k = ridge_solve(&sys.omega_tilde, &sys.b, 0.0).unwrap();
        assert!(p.cost(&l, &k).unwrap().total < 1e-18);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = problem(1e-7, 1e-1, 6);
        let l = [-14.0, -9.5, -6.0, -2.5, -1.1, -0.3];
        let e = p.reduced(&l).unwrap();
        let ga = p.reduced_gradient(&l, &e);
        let gf = p.finite_difference_gradient(&l, 1e-6).unwrap();
        let scale = ga.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, f) in ga.iter().zip(&gf) {
            assert!((a - f).abs() <= 1e-4 * scale, "{a} vs {f}");
        }
    }

    #[test]
    fn single_mode_single_tone_is_matched() {
        let u = MultiSineSignal::from_triples(&[(2.0, 1.0, 0.0)]).unwrap();
        let y = MultiSineSignal::from_triples(&[(2.0, 1.0, 0.0)]).unwrap();
        let config = OptimizerConfig {
            n_modes: 1,
            restarts: 8,
            beta1: 0.0,
            ..OptimizerConfig::default()
        };
        let r = optimize(&config, &u, &y, &[1.0]).unwrap();
        // Grid search oracle over [-25, 0]: the best reachable error.
        let p = Problem::new(&config, &u, &y, &[1.0]).unwrap();
        let grid_best = (0..=25_000)
            .map(|k| -25.0 + k as f64 * 1e-3)
            .map(|l| weighted_error(&p.reduced(&[l]).unwrap()))
            .fold(f64::INFINITY, f64::min);
        assert!(r.lowest_error <= grid_best + 1e-9, "{} vs {}", r.lowest_error, grid_best);
        assert!(r.lowest_error < 1e-2);
        assert!(feasible(&r.lambdas, 6.0, 2.0, config.constraint_margin));
    }

    #[test]
    fn restarts_are_deterministic_and_monotone() {
        let (u, y) = three_tone_task();
        let config = OptimizerConfig {
            n_modes: 4,
            restarts: 6,
            seed: 5,
            ..OptimizerConfig::default()
        };
        let mask = [0.8, -1.1, 0.4, 1.6];
        let a = optimize(&config, &u, &y, &mask).unwrap();
        let b = optimize(&config, &u, &y, &mask).unwrap();
        assert_eq!(a, b);
        assert!(a.restart_history.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
        for r in a.restart_history.iter().filter(|r| r.converged) {
            assert!(r.final_error <= r.initial_error * (1.0 + 1e-9) || r.final_cost.is_finite());
            assert!(r.best_so_far >= a.lowest_error);
        }
        assert!(feasible(&a.lambdas, 6.0, 5.0, config.constraint_margin));
        let c = optimize(&OptimizerConfig { seed: 6, ..config.clone() }, &u, &y, &mask).unwrap();
        assert_ne!(a.restart_history, c.restart_history);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (u, y) = three_tone_task();
        let bad = OptimizerConfig {
            lambda_init_low: 0.0,
            lambda_init_high: 0.0,
            n_modes: 1,
            ..OptimizerConfig::default()
        };
        assert!(optimize(&bad, &u, &y, &[1.0]).is_err());
        let ok = OptimizerConfig { n_modes: 2, ..OptimizerConfig::default() };
        assert!(optimize(&ok, &u, &y, &[1.0]).is_err());
    }

    #[test]
    fn perturb_examples() {
        let l = [-3.0, -1.0, -0.05];
        assert_eq!(perturb(&l, 0.0, 0.0, 1).unwrap(), l.to_vec());
        let p = perturb(&l, 0.1, 0.0, 1).unwrap();
        for (a, b) in p.iter().zip(&l) {
            assert!(a - b >= -0.1 && a - b < 0.0);
        }
        assert!(perturb(&l, -1.0, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn perturbed_spectra_stay_feasible(
            l in prop::collection::vec(-20.0f64..0.0, 1..12),
            eps in 0.0f64..10.0, seed in 0u64..1000,
        ) {
            let ub = upper_bound(6.0, 7.0, 1e-6);
            let start: Vec<f64> = l.iter().map(|v| v.min(ub)).collect();
            let p = perturb(&start, eps, ub, seed).unwrap();
            prop_assert!(feasible(&p, 6.0, 7.0, 1e-6));
        }

        #[test]
        fn spread_matches_brute_force(l in prop::collection::vec(-20.0f64..0.0, 2..10)) {
            let h = harmonic_spread(&l).unwrap();
            prop_assert!((h - spread_oracle(&l)).abs() <= 1e-12 * h.abs().max(1e-12));
        }
    }
}
