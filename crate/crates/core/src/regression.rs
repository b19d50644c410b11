//! Readout training: ridge regression on time-domain states and on the
//! frequency-domain design matrix, plus the error measures used to compare
//! them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{
    decouple, simulate, transfer_response, Drive, ModalReservoir, ReservoirTopology,
    SimulationOptions, StateMatrix, TimeGrid,
};
use crate::signals::MultiSineSignal;

/// Largest condition number accepted for an unregularised solve.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub kappa: DVector<f64>,
    pub domain: Domain,
}

impl ReadoutWeights {
    fn new(kappa: DVector<f64>, domain: Domain) -> Result<Self> {
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::SingularSystem {
                condition: f64::INFINITY,
            });
        }
        Ok(Self { kappa, domain })
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("ridge parameter must be >= 0, got {beta}")))
    }
}

/// Solve `min ||X k - y||^2 + beta ||k||^2`.
///
/// With `beta > 0` this factors the smaller of the primal (`X^T X + beta I`)
/// and dual (`X X^T + beta I`) Gram matrices by Cholesky. With `beta = 0` it
/// goes through a pseudo-inverse and refuses problems whose condition number exceeds
/// [`MAX_CONDITION`].
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, beta: f64) -> Result<DVector<f64>> {
    check_beta(beta)?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but target has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("design has no columns".into()));
    }
    if beta > 0.0 {
        let singular = || Error::SingularSystem {
            condition: f64::INFINITY,
        };
        if x.ncols() <= x.nrows() {
            let mut gram = x.tr_mul(x);
            for i in 0..gram.nrows() {
                gram[(i, i)] += beta;
            }
            let rhs = x.tr_mul(y);
            gram.cholesky().map(|c| c.solve(&rhs)).ok_or_else(singular)
        } else {
            let mut gram = x * x.transpose();
            for i in 0..gram.nrows() {
                gram[(i, i)] += beta;
            }
            gram.cholesky()
                .map(|c| x.tr_mul(&c.solve(y)))
                .ok_or_else(singular)
        }
    } else {
        let (k, sv) = pinv_solve(x, y, 0.0)?;
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularSystem { condition });
        }
        Ok(k)
    }
}

/// `pinv(X) y` with singular values at or below `rcond * sigma_max` dropped,
/// plus the singular values of `X`.
///
/// The SVD is taken of the square triangular factor of a thin QR of `X` (or
/// of `X^T` when `X` is wide); a direct SVD of a tall rank-deficient matrix
/// can return a factorisation that does not reproduce it.
fn pinv_solve(x: &DMatrix<f64>, y: &DVector<f64>, rcond: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let singular = || Error::SingularSystem { condition: f64::INFINITY };
    let tall = x.nrows() >= x.ncols();
    let (q, r) = if tall { x.clone().qr().unpack() } else { x.transpose().qr().unpack() };
    // Tall: X = Q R, pinv(X) = pinv(R) Q^T. Wide: X = R^T Q^T, pinv(X) = Q pinv(R^T).
    let small = if tall { r } else { r.transpose() };
    let svd = small.svd(true, true);
    let eps = rcond * svd.singular_values.max();
    let k = if tall {
        svd.solve(&q.tr_mul(y), eps).map_err(|_| singular())?
    } else {
        q * svd.solve(y, eps).map_err(|_| singular())?
    };
    Ok((k, svd.singular_values))
}

/// Minimum-norm least-squares solution, discarding singular values below
/// `rcond * sigma_max`. Used where the design is rank deficient by
/// construction and only the fit signal is meaningful.
pub fn min_norm_solve(x: &DMatrix<f64>, y: &DVector<f64>, rcond: f64) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument("design and target lengths differ".into()));
    }
    Ok(pinv_solve(x, y, rcond)?.0)
}

/// Time-domain readout `kappa = (Omega^T Omega + beta I)^{-1} Omega^T y`.
pub fn ridge_fit(states: &StateMatrix, target: &DVector<f64>, beta: f64) -> Result<ReadoutWeights> {
    ReadoutWeights::new(ridge_solve(&states.states, target, beta)?, Domain::Time)
}

/// `||Omega kappa - y|| / sqrt(T)`.
pub fn time_domain_error(states: &DMatrix<f64>, target: &DVector<f64>, kappa: &DVector<f64>) -> f64 {
    (states * kappa - target).norm() / (target.len() as f64).sqrt()
}

/// `||fit - target|| / ||target||`.
pub fn nrmse(fit: &[f64], target: &[f64]) -> Result<f64> {
    if fit.len() != target.len() {
        return Err(Error::InvalidArgument("fit and target lengths differ".into()));
    }
    let reference = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err = fit
        .iter()
        .zip(target)
        .map(|(f, t)| (f - t) * (f - t))
        .sum::<f64>()
        .sqrt();
    Ok(err / reference)
}

/// The `2K x N` frequency-domain regression problem.
///
/// Rows `2k` and `2k + 1` hold the cosine and sine coefficients of every
/// mode's steady-state response at frequency `k`, with a signal written as
/// `C cos(w t) - S sin(w t)`, i.e. `R cos(w t + phi)` has `(C, S) = (R cos phi,
/// R sin phi)`. `b` holds the same coefficients for the target.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDesignMatrix {
    pub omega_tilde: DMatrix<f64>,
    pub b: DVector<f64>,
    pub omegas: Vec<f64>,
    /// Per-frequency weights `1 / omega_k`.
    pub weights: Vec<f64>,
}

impl FrequencyDesignMatrix {
    pub fn n_frequencies(&self) -> usize {
        self.omegas.len()
    }

    /// Row weights for a weighted solve: each frequency weight applied to both
    /// of its rows.
    pub fn row_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.weights.len(),
            self.weights.iter().flat_map(|&w| [w, w]),
        )
    }

    pub fn residual(&self, kappa: &DVector<f64>) -> DVector<f64> {
        &self.omega_tilde * kappa - &self.b
    }

    /// `sum_k W_k (e_cos,k^2 + e_sin,k^2)`.
    pub fn weighted_error_sq(&self, kappa: &DVector<f64>) -> f64 {
        let r = self.residual(kappa);
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * (r[2 * k].powi(2) + r[2 * k + 1].powi(2)))
            .sum()
    }

    /// NRMSE of the steady-state fit: the coefficient-space residual norm
    /// relative to the target's.
    pub fn coefficient_nrmse(&self, kappa: &DVector<f64>) -> Result<f64> {
        let reference = self.b.norm();
        if reference == 0.0 {
            return Err(Error::ZeroReference);
        }
        Ok(self.residual(kappa).norm() / reference)
    }
}

/// Rows of the design matrix from the modal transfer functions.
pub fn build_frequency_system(
    modal: &ModalReservoir,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
) -> Result<FrequencyDesignMatrix> {
    if !input.shares_frequencies(target) || input.is_empty() {
        return Err(Error::FrequencyMismatch);
    }
    let omegas = input.omegas();
    let resp = transfer_response(modal, &omegas)?;
    let (k, n) = (omegas.len(), modal.n());
    let mut omega_tilde = DMatrix::zeros(2 * k, n);
    let mut b = DVector::zeros(2 * k);
    for (row, (u, y)) in input.tones().iter().zip(target.tones()).enumerate() {
        let drive = Complex64::from_polar(u.amplitude, u.phase);
        for i in 0..n {
            let z = drive * resp.phasor(row, i);
            omega_tilde[(2 * row, i)] = z.re;
            omega_tilde[(2 * row + 1, i)] = z.im;
        }
        b[2 * row] = y.amplitude * y.phase.cos();
        b[2 * row + 1] = y.amplitude * y.phase.sin();
    }
    let weights = omegas.iter().map(|w| 1.0 / w).collect();
    Ok(FrequencyDesignMatrix {
        omega_tilde,
        b,
        omegas,
        weights,
    })
}

/// Unweighted frequency-domain readout `(Ot^T Ot + beta I)^{-1} Ot^T B`.
pub fn frequency_fit(sys: &FrequencyDesignMatrix, beta: f64) -> Result<ReadoutWeights> {
    ReadoutWeights::new(ridge_solve(&sys.omega_tilde, &sys.b, beta)?, Domain::Frequency)
}

/// Frequency-domain readout minimising `sum W_k (e_cos^2 + e_sin^2) + beta ||k||^2`.
pub fn weighted_frequency_fit(sys: &FrequencyDesignMatrix, beta: f64) -> Result<ReadoutWeights> {
    let sw = sys.row_weights().map(f64::sqrt);
    let x = DMatrix::from_fn(sys.omega_tilde.nrows(), sys.omega_tilde.ncols(), |r, c| {
        sw[r] * sys.omega_tilde[(r, c)]
    });
    let y = sys.b.component_mul(&sw);
    ReadoutWeights::new(ridge_solve(&x, &y, beta)?, Domain::Frequency)
}

/// The fit `sum_i kappa_i q_i(t)` as a multi-sine, read off the coefficient
/// vector `Ot kappa`.
pub fn fit_signal(sys: &FrequencyDesignMatrix, kappa: &DVector<f64>) -> Result<MultiSineSignal> {
    let coeffs = &sys.omega_tilde * kappa;
    MultiSineSignal::new(
        sys.omegas
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let z = Complex64::new(coeffs[2 * k], coeffs[2 * k + 1]);
                crate::signals::Tone::new(w, z.norm(), z.arg())
            })
            .collect(),
    )
}

/// Serialised record of one trained readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta: f64,
    pub nrmse_train: f64,
    pub nrmse_test: f64,
    pub kappa: Vec<f64>,
    pub domain: Domain,
}

/// Outcome of fitting the coupled reservoir and its modal form side by side.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub n: usize,
    pub eps_coupled: f64,
    pub eps_decoupled: f64,
    /// `max |kappa_j - (V kappa')_j|` over the node weights.
    pub kappa_transform_residual: f64,
    pub bias_difference: f64,
    /// `||fit_coupled - fit_decoupled|| / ||fit_coupled||`.
    pub fit_difference: f64,
}

/// Relative singular-value cutoff for unregularised fits of simulated
/// states, whose transients make the design numerically rank deficient.
pub const STATE_RCOND: f64 = 1e-6;

/// Train readouts (with bias) on the coupled reservoir and on its modal
/// decomposition, both started from rest and driven by `input` over `grid`,
/// and compare them. With `beta = 0` the minimum-norm solution is used on
/// both sides.
pub fn verify_theorem1(
    top: &ReservoirTopology,
    input: &dyn Drive,
    target: &DVector<f64>,
    grid: TimeGrid,
    beta: f64,
) -> Result<Theorem1Report> {
    let (modal, v) = decouple(top)?;
    verify_decomposition(top, &modal, &v, input, target, grid, beta)
}

/// [`verify_theorem1`] against a supplied modal form and eigenvector matrix,
/// which need not be a true decomposition of `top`.
pub fn verify_decomposition(
    top: &ReservoirTopology,
    modal: &ModalReservoir,
    v: &DMatrix<f64>,
    input: &dyn Drive,
    target: &DVector<f64>,
    grid: TimeGrid,
    beta: f64,
) -> Result<Theorem1Report> {
    check_beta(beta)?;
    if target.len() != grid.steps {
        return Err(Error::InvalidArgument("target length must match the grid".into()));
    }
    let n = top.n();
    if modal.n() != n || v.shape() != (n, n) {
        return Err(Error::InvalidArgument("decomposition size does not match the reservoir".into()));
    }
    let opts = SimulationOptions::linear().with_bias();
    let r = simulate(top, input, grid, &DVector::zeros(n), opts)?;
    let q = simulate(modal, input, grid, &DVector::zeros(n), opts)?;
    compare_frames(&r.states, &q.states, v, target, beta)
}

/// The comparison behind [`verify_theorem1`], on explicit state matrices
/// (each with a trailing bias column) and the claimed eigenvector matrix.
pub fn compare_frames(
    coupled: &DMatrix<f64>,
    decoupled: &DMatrix<f64>,
    v: &DMatrix<f64>,
    target: &DVector<f64>,
    beta: f64,
) -> Result<Theorem1Report> {
    let n = v.nrows();
    let fit = |x: &DMatrix<f64>| {
        if beta == 0.0 {
            min_norm_solve(x, target, STATE_RCOND)
        } else {
            ridge_solve(x, target, beta)
        }
    };
    let kr = fit(coupled)?;
    let kq = fit(decoupled)?;
    let mapped = v * kq.rows(0, n);
    let kappa_transform_residual = (kr.rows(0, n) - mapped).amax();
    let fr = coupled * &kr;
    let fq = decoupled * &kq;
    let fit_difference = (&fr - &fq).norm() / fr.norm().max(f64::MIN_POSITIVE);
    Ok(Theorem1Report {
        n,
        eps_coupled: time_domain_error(coupled, target, &kr),
        eps_decoupled: time_domain_error(decoupled, target, &kq),
        kappa_transform_residual,
        bias_difference: (kr[n] - kq[n]).abs(),
        fit_difference,
    })
}

/// Time- versus frequency-domain readouts of one modal reservoir.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    pub n: usize,
    pub k: usize,
    pub nrmse_time: f64,
    pub nrmse_frequency: f64,
    /// `|nrmse_time - nrmse_frequency| / nrmse_frequency`.
    pub nrmse_relative_deviation: f64,
    /// `||kappa_time - kappa_freq|| / ||kappa_freq||` over the node weights.
    pub kappa_relative_deviation: f64,
    pub bias_weight: f64,
}

/// Simulate `modal` from rest, drop `washout` rows and fit a biased
/// time-domain readout; fit the frequency-domain readout from the design
/// matrix; evaluate both readouts on the same post-washout states.
///
/// `beta` is in frequency-domain units. Over `T` samples spanning whole
/// periods of every tone the time-domain Gram matrix is `T/2` times the
/// frequency-domain one, so the time-domain solve uses `beta * T / 2`.
pub fn verify_theorem2(
    modal: &ModalReservoir,
    input: &MultiSineSignal,
    target: &MultiSineSignal,
    grid: TimeGrid,
    washout: usize,
    beta: f64,
) -> Result<Theorem2Report> {
    check_beta(beta)?;
    let sys = build_frequency_system(modal, input, target)?;
    let states = simulate(
        modal,
        input,
        grid,
        &DVector::zeros(modal.n()),
        SimulationOptions::linear().with_bias(),
    )?
    .skip_rows(washout)?;
    let y = DVector::from_vec(states.grid.sample(target));
    let t = states.rows() as f64;
    let kt = ridge_fit(&states, &y, beta * t / 2.0)?.kappa;
    let kf = frequency_fit(&sys, beta)?.kappa;
    let n = modal.n();
    let fit_t = &states.states * &kt;
    let fit_f = states.states.columns(0, n) * &kf;
    let nrmse_time = nrmse(fit_t.as_slice(), y.as_slice())?;
    let nrmse_frequency = nrmse(fit_f.as_slice(), y.as_slice())?;
    Ok(Theorem2Report {
        n,
        k: input.len(),
        nrmse_time,
        nrmse_frequency,
        nrmse_relative_deviation: (nrmse_time - nrmse_frequency).abs() / nrmse_frequency,
        kappa_relative_deviation: (kt.rows(0, n) - &kf).norm() / kf.norm().max(f64::MIN_POSITIVE),
        bias_weight: kt[n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{steady_state_series, TimeGrid};
    use crate::signals::three_tone_task;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn min_norm_on_tall_rank_deficient_design() {
        // Two parallel columns plus a constant: the fit must equal the
        // least-squares fit on the independent pair.
        let rows = 3000;
        let x = DVector::from_fn(rows, |k, _| (0.013 * k as f64).sin() + 0.2 * (0.05 * k as f64).cos());
        let y = DVector::from_fn(rows, |k, _| (0.021 * k as f64).cos());
        let wide = DMatrix::from_fn(rows, 3, |k, j| match j {
            0 => 0.7786815346734607 * x[k],
            1 => 0.22404647010339193 * x[k],
            _ => 1.0,
        });
        let pair = DMatrix::from_fn(rows, 2, |k, j| if j == 0 { x[k] } else { 1.0 });
        let k3 = min_norm_solve(&wide, &y, 1e-9).unwrap();
        let k2 = ridge_solve(&pair, &y, 0.0).unwrap();
        assert_abs_diff_eq!((&wide * &k3 - &y).norm(), (&pair * &k2 - &y).norm(), epsilon = 1e-9);
        assert_abs_diff_eq!(k3[0] / k3[1], 0.7786815346734607 / 0.22404647010339193, epsilon = 1e-9);
        let kt = min_norm_solve(&wide.transpose(), &DVector::from_element(3, 1.0), 1e-9).unwrap();
        assert_eq!(kt.len(), rows);
    }

    fn design(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn identity_design_reproduces_target() {
        let k = ridge_solve(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 2.0]), 0.0).unwrap();
        assert_abs_diff_eq!(k[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn column_of_ones() {
        let k = ridge_solve(&design(2, 1, &[1.0, 1.0]), &DVector::from_vec(vec![1.0, 1.0]), 0.0).unwrap();
        assert_abs_diff_eq!(k[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn heavy_shrinkage_drives_weights_to_zero() {
        let k = ridge_solve(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 2.0]), 1e9).unwrap();
        assert!(k.amax() < 1e-8);
    }

    #[test]
    fn singular_unregularised_system_is_rejected() {
        let x = design(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ridge_solve(&x, &y, 0.0), Err(Error::SingularSystem { .. })));
        assert!(ridge_solve(&x, &y, 1e-6).is_ok());
        assert!(ridge_solve(&x, &y, -1.0).is_err());
        let mn = min_norm_solve(&x, &y, 1e-12).unwrap();
        assert_abs_diff_eq!(mn[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mn[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn primal_and_dual_ridge_agree() {
        let x = DMatrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64 * 0.7).sin());
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let dual = ridge_solve(&x, &y, 0.05).unwrap();
        let mut gram = x.tr_mul(&x);
        gram += DMatrix::identity(7, 7) * 0.05;
        let primal = gram.lu().solve(&x.tr_mul(&y)).unwrap();
        assert!((dual - primal).amax() < 1e-12);
    }

    #[test]
    fn time_error_examples() {
        let x = DMatrix::identity(4, 4);
        let ones = DVector::from_element(4, 1.0);
        assert_abs_diff_eq!(time_domain_error(&x, &ones, &ones), 0.0);
        assert_abs_diff_eq!(time_domain_error(&x, &ones, &DVector::zeros(4)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(time_domain_error(&x, &(&ones * 3.0), &DVector::zeros(4)), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn nrmse_examples() {
        let y = [1.0, -2.0, 0.5];
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        assert_abs_diff_eq!(nrmse(&[0.0; 3], &y).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nrmse(&[2.0, -4.0, 1.0], &y).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(nrmse(&[1.0], &[0.0]), Err(Error::ZeroReference)));
    }

    #[test]
    fn unit_mode_design_matrix() {
        // gamma -> large makes M -> 1 and theta -> 0 for lambda = 0, c = 1.
        let m = ModalReservoir::new(vec![0.0], vec![1.0], 1e12).unwrap();
        let u = MultiSineSignal::from_triples(&[(1.0, 1.0, 0.0)]).unwrap();
        let sys = build_frequency_system(&m, &u, &u).unwrap();
        assert_abs_diff_eq!(sys.omega_tilde[(0, 0)], 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(sys.omega_tilde[(1, 0)], 0.0, epsilon = 1e-11);
        assert_eq!(sys.b.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn three_tone_design_is_six_by_three() {
        let (u, y) = three_tone_task();
        let m = ModalReservoir::new(vec![-3.0, -1.0, -0.2], vec![1.0, -0.5, 0.8], 6.0).unwrap();
        let sys = build_frequency_system(&m, &u, &y).unwrap();
        assert_eq!(sys.omega_tilde.shape(), (6, 3));
        assert_eq!(sys.weights, vec![1.0, 1.0 / 3.0, 0.2]);
    }

    #[test]
    fn mismatched_frequencies_are_rejected() {
        let u = MultiSineSignal::from_triples(&[(1.0, 1.0, 0.0)]).unwrap();
        let y = MultiSineSignal::from_triples(&[(2.0, 1.0, 0.0)]).unwrap();
        let m = ModalReservoir::new(vec![-1.0], vec![1.0], 6.0).unwrap();
        assert!(matches!(build_frequency_system(&m, &u, &y), Err(Error::FrequencyMismatch)));
    }

    #[test]
    fn design_rows_match_dft_of_analytic_fit() {
        // Tones on bins of a 600-sample, tau = 0.01 window.
        let bin = 2.0 * std::f64::consts::PI / 6.0;
        let u = MultiSineSignal::from_triples(&[(bin * 2.0, 1.2, 0.4), (bin * 5.0, 0.7, -1.0)]).unwrap();
        let y = MultiSineSignal::from_triples(&[(bin * 2.0, 1.0, 0.0), (bin * 5.0, 1.0, 0.0)]).unwrap();
        let m = ModalReservoir::new(vec![-4.0, -1.3, -0.1], vec![0.9, -1.4, 0.3], 6.0).unwrap();
        let sys = build_frequency_system(&m, &u, &y).unwrap();
        let kappa = DVector::from_vec(vec![0.7, -0.2, 1.9]);
        let grid = TimeGrid::new(0.0, 0.01, 600).unwrap();
        let series = steady_state_series(&m, &u, grid).unwrap().states * &kappa;
        let coeffs = &sys.omega_tilde * &kappa;
        for (k, &w) in sys.omegas.iter().enumerate() {
            let mut z = Complex64::new(0.0, 0.0);
            for (row, t) in grid.times().into_iter().enumerate() {
                z += series[row] * Complex64::from_polar(1.0, -w * t);
            }
            z *= 2.0 / 600.0;
            assert!((z.re - coeffs[2 * k]).abs() < 1e-9);
            assert!((z.im - coeffs[2 * k + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn square_full_rank_system_interpolates() {
        let (u, y) = three_tone_task();
        let m = ModalReservoir::new(vec![-6.0, -4.0, -2.5, -1.2, -0.6, -0.1], vec![1.0, -0.8, 0.6, 1.1, -0.9, 0.7], 6.0).unwrap();
        let sys = build_frequency_system(&m, &u, &y).unwrap();
        let k = frequency_fit(&sys, 0.0).unwrap();
        assert!(sys.residual(&k.kappa).norm() < 1e-9);
        let zero = FrequencyDesignMatrix { b: DVector::zeros(6), ..sys.clone() };
        assert_eq!(frequency_fit(&zero, 1e-3).unwrap().kappa.amax(), 0.0);
    }

    #[test]
    fn weighted_fit_minimises_weighted_objective() {
        let (u, y) = three_tone_task();
        let m = ModalReservoir::new(vec![-3.0, -1.0], vec![1.0, 0.5], 6.0).unwrap();
        let sys = build_frequency_system(&m, &u, &y).unwrap();
        let beta = 1e-3;
        let k = weighted_frequency_fit(&sys, beta).unwrap().kappa;
        let obj = |k: &DVector<f64>| sys.weighted_error_sq(k) + beta * k.norm_squared();
        let base = obj(&k);
        for i in 0..2 {
            for s in [-1e-4, 1e-4] {
                let mut p = k.clone();
                p[i] += s;
                assert!(obj(&p) >= base);
            }
        }
    }

    #[test]
    fn fit_signal_matches_coefficients() {
        let (u, y) = three_tone_task();
        let m = ModalReservoir::new(vec![-3.0, -1.0, -0.3], vec![1.0, 0.5, -1.0], 6.0).unwrap();
        let sys = build_frequency_system(&m, &u, &y).unwrap();
        let kappa = DVector::from_vec(vec![0.3, -2.0, 1.0]);
        let fit = fit_signal(&sys, &kappa).unwrap();
        let grid = TimeGrid::new(0.0, 0.05, 50).unwrap();
        let states = steady_state_series(&m, &u, grid).unwrap().states * &kappa;
        for (row, v) in grid.sample(&fit).into_iter().enumerate() {
            assert_abs_diff_eq!(v, states[row], epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_frames_differ_by_sign_only() {
        let top = ReservoirTopology::new(
            DMatrix::from_element(1, 1, -0.4),
            DVector::from_element(1, 1.3),
            6.0,
        )
        .unwrap();
        let (u, y) = three_tone_task();
        let grid = TimeGrid::new(0.0, 0.01, 500).unwrap();
        let target = DVector::from_vec(grid.sample(&y));
        let rep = verify_theorem1(&top, &u, &target, grid, 0.0).unwrap();
        assert!(rep.kappa_transform_residual < 1e-12);
        assert!(rep.bias_difference < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ridge_norm_shrinks_with_beta(
            data in prop::collection::vec(-2.0f64..2.0, 24),
            target in prop::collection::vec(-2.0f64..2.0, 6),
            b1 in 0.0f64..1.0, db in 0.0f64..5.0,
        ) {
            let x = DMatrix::from_row_slice(6, 4, &data);
            let y = DVector::from_vec(target);
            let b1 = b1 + 1e-9;
            let k1 = ridge_solve(&x, &y, b1).unwrap();
            let k2 = ridge_solve(&x, &y, b1 + db).unwrap();
            prop_assert!(k1.norm() >= k2.norm() * (1.0 - 1e-12));
        }

        #[test]
        fn unregularised_residual_is_orthogonal_to_design(
            data in prop::collection::vec(-2.0f64..2.0, 30),
            target in prop::collection::vec(-2.0f64..2.0, 10),
        ) {
            let x = DMatrix::from_row_slice(10, 3, &data);
            let y = DVector::from_vec(target);
            if let Ok(k) = ridge_solve(&x, &y, 0.0) {
                let g = x.tr_mul(&(&x * &k - &y));
                prop_assert!(g.amax() <= 1e-8 * x.tr_mul(&y).norm().max(1e-12));
            }
        }
    }
}
