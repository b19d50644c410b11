//! Randomised equivalence checks between the coupled, modal, time-domain
//! and frequency-domain views of a linear reservoir.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{verify_decomposition, verify_theorem2, Theorem1Report, Theorem2Report};
use crate::reservoir::{decouple, generate_random_topology, ModalReservoir, ReservoirTopology, TimeGrid};
use crate::rng;
use crate::signals::{MultiSineSignal, Tone};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremCheckConfig {
    pub instances: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub edge_prob: f64,
    pub max_eig: f64,
    pub gamma: f64,
    pub tau: f64,
    pub steps: usize,
    /// Rows dropped before the time-domain fit in the frequency comparison.
    pub washout: usize,
    /// Frequency-domain ridge parameter of the frequency comparison.
    pub beta: f64,
    pub k_max: usize,
    pub error_tol: f64,
    pub kappa_tol: f64,
    pub nrmse_tol: f64,
}

impl Default for TheoremCheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            n_min: 2,
            n_max: 20,
            edge_prob: 0.5,
            max_eig: -0.1,
            gamma: 6.0,
            tau: 0.01,
            steps: 3000,
            washout: 500,
            beta: 1e-7,
            k_max: 5,
            error_tol: 1e-8,
            kappa_tol: 1e-6,
            nrmse_tol: 1e-2,
        }
    }
}

impl TheoremCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max || self.k_max == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("theorem check needs 1 <= n_min <= n_max, k_max >= 1, steps >= 1".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.tau, self.steps)
    }
}

/// Random weighted ER reservoir for coupled/modal instance `index`.
pub fn coupled_case(config: &TheoremCheckConfig, seed: u64, index: usize) -> Result<ReservoirTopology> {
    let mut r = rng::stream(seed, "theorem.coupled", index as u64);
    let n = r.gen_range(config.n_min..=config.n_max);
    generate_random_topology(n, config.edge_prob, true, config.max_eig, config.gamma, r.gen())
}

/// Random stable modal reservoir and a task whose tones sit on DFT bins of
/// the post-washout window, for time/frequency instance `index`.
pub fn modal_case(
    config: &TheoremCheckConfig,
    seed: u64,
    index: usize,
) -> Result<(ModalReservoir, MultiSineSignal, MultiSineSignal)> {
    let mut r = rng::stream(seed, "theorem.modal", index as u64);
    let window = (config.steps - config.washout.min(config.steps - 1)) as f64 * config.tau;
    let bin = 2.0 * PI / window;
    // Bins from 3 up to 0.8 gamma, at least two bins apart.
    let top_bin = (0.8 * config.gamma / bin).floor() as usize;
    if top_bin < 3 {
        return Err(Error::InvalidArgument(format!("window of {window} s is too short for bin-centred tones")));
    }
    let n = r.gen_range(config.n_min..=config.n_max);
    let k = r.gen_range(1..=config.k_max).min((top_bin - 3) / 2 + 1);
    let lambdas: Vec<f64> = (0..n).map(|_| r.gen_range(-20.0..=0.0)).collect();
    let mask: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let lattice: Vec<usize> = (3..=top_bin).step_by(2).collect();
    let mut bins: Vec<usize> = lattice.choose_multiple(&mut r, k).cloned().collect();
    bins.sort_unstable();
    let tones = |r: &mut rand_chacha::ChaCha8Rng| {
        MultiSineSignal::new(
            bins.iter()
                .map(|&b| Tone::new(b as f64 * bin, r.gen_range(0.5..=2.5), PI - 2.0 * PI * r.gen::<f64>()))
                .collect(),
        )
    };
    let u = tones(&mut r)?;
    let y = tones(&mut r)?;
    Ok((ModalReservoir::new(lambdas, mask, config.gamma)?, u, y))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRow {
    pub index: usize,
    #[serde(flatten)]
    pub report: Theorem1Report,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModalRow {
    pub index: usize,
    #[serde(flatten)]
    pub report: Theorem2Report,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheckReport {
    pub coupled: Vec<CoupledRow>,
    pub modal: Vec<ModalRow>,
    pub violations: usize,
}

/// Coupled-vs-modal fit of one reservoir over the configured window, both
/// sides unregularised. With `corrupt` the eigenvector matrix is made
/// non-orthogonal first, which must break the equivalence.
pub fn check_coupled(
    config: &TheoremCheckConfig,
    top: &ReservoirTopology,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
    corrupt: bool,
) -> Result<Theorem1Report> {
    let grid = config.grid()?;
    let (modal, mut v) = decouple(top)?;
    let modal = if corrupt {
        let n = v.nrows();
        v += DMatrix::from_fn(n, n, |i, j| 0.3 * (((i * 31 + j * 17) % 7) as f64 - 3.0) / 3.0);
        let mask: DVector<f64> = v.tr_mul(top.mask());
        ModalReservoir::new(modal.lambdas().to_vec(), mask.iter().cloned().collect(), modal.gamma())?
    } else {
        modal
    };
    let y = DVector::from_vec(grid.sample(target));
    verify_decomposition(top, &modal, &v, input, &y, grid, 0.0)
}

pub fn check_modal(
    config: &TheoremCheckConfig,
    modal: &ModalReservoir,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
) -> Result<Theorem2Report> {
    verify_theorem2(modal, input, target, config.grid()?, config.washout, config.beta)
}

impl TheoremCheckConfig {
    pub fn coupled_passes(&self, r: &Theorem1Report) -> bool {
        (r.eps_coupled - r.eps_decoupled).abs() < self.error_tol && r.kappa_transform_residual < self.kappa_tol
    }

    pub fn modal_passes(&self, r: &Theorem2Report) -> bool {
        r.nrmse_relative_deviation < self.nrmse_tol
    }
}

/// Run `instances` coupled/modal cases on the given task and as many
/// time/frequency cases, counting tolerance violations.
pub fn run_theorem_check(
    config: &TheoremCheckConfig,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
    seed: u64,
    corrupt: bool,
) -> Result<TheoremCheckReport> {
    config.validate()?;
    let mut coupled = Vec::with_capacity(config.instances);
    let mut modal = Vec::with_capacity(config.instances);
    for index in 0..config.instances {
        let top = coupled_case(config, seed, index)?;
        let report = check_coupled(config, &top, input, target, corrupt)?;
        let passed = config.coupled_passes(&report);
        coupled.push(CoupledRow { index, report, passed });

        let (m, u, y) = modal_case(config, seed, index)?;
        let report = check_modal(config, &m, &u, &y)?;
        let passed = config.modal_passes(&report);
        modal.push(ModalRow { index, report, passed });
    }
    let violations = coupled.iter().filter(|r| !r.passed).count() + modal.iter().filter(|r| !r.passed).count();
    Ok(TheoremCheckReport { coupled, modal, violations })
}
