use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModalReservoir, ReservoirTopology, StateMatrix, TimeGrid};
use crate::error::{Error, Result};
use crate::signals::{MultiSineSignal, SampledSeries};

const DIVERGENCE_LIMIT: f64 = 1e12;

/// Node nonlinearity `f` in `r' = gamma * (-r + f(A r + d u))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Exact propagation for linear dynamics where available, RK4 otherwise.
    #[default]
    Auto,
    /// Classical fixed-step RK4 with step `tau`, whatever the dynamics.
    Rk4,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationOptions {
    pub activation: Activation,
    pub integrator: Integrator,
    pub bias_column: bool,
}

impl SimulationOptions {
    pub fn linear() -> Self {
        Self::default()
    }

    pub fn with_bias(mut self) -> Self {
        self.bias_column = true;
        self
    }

    pub fn activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

/// Scalar input signal evaluated at arbitrary times.
pub trait Drive: Sync {
    fn value_at(&self, t: f64) -> f64;

    /// The drive as an exact sum of tones, when it is one.
    fn as_multisine(&self) -> Option<&MultiSineSignal> {
        None
    }

    /// The drive as samples, when it is a sampled series.
    fn as_series(&self) -> Option<&SampledSeries> {
        None
    }
}

impl Drive for MultiSineSignal {
    fn value_at(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn as_multisine(&self) -> Option<&MultiSineSignal> {
        Some(self)
    }
}

impl Drive for SampledSeries {
    fn value_at(&self, t: f64) -> f64 {
        self.interpolate(t)
    }

    fn as_series(&self) -> Option<&SampledSeries> {
        Some(self)
    }
}

/// Either form of a reservoir.
#[derive(Debug, Clone, Copy)]
pub enum ReservoirRef<'a> {
    Coupled(&'a ReservoirTopology),
    Modal(&'a ModalReservoir),
}

impl<'a> From<&'a ReservoirTopology> for ReservoirRef<'a> {
    fn from(t: &'a ReservoirTopology) -> Self {
        ReservoirRef::Coupled(t)
    }
}

impl<'a> From<&'a ModalReservoir> for ReservoirRef<'a> {
    fn from(m: &'a ModalReservoir) -> Self {
        ReservoirRef::Modal(m)
    }
}

impl ReservoirRef<'_> {
    pub fn n(&self) -> usize {
        match self {
            ReservoirRef::Coupled(t) => t.n(),
            ReservoirRef::Modal(m) => m.n(),
        }
    }

    fn gamma(&self) -> f64 {
        match self {
            ReservoirRef::Coupled(t) => t.gamma(),
            ReservoirRef::Modal(m) => m.gamma(),
        }
    }

    fn mask(&self) -> DVector<f64> {
        match self {
            ReservoirRef::Coupled(t) => t.mask().clone(),
            ReservoirRef::Modal(m) => DVector::from_column_slice(m.mask()),
        }
    }

    /// `A x`, with `A = diag(lambda)` in modal form.
    fn couple(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ReservoirRef::Coupled(t) => t.adjacency() * x,
            ReservoirRef::Modal(m) => {
                DVector::from_iterator(x.len(), x.iter().zip(m.lambdas()).map(|(v, l)| v * l))
            }
        }
    }
}

fn check_state(x: &DVector<f64>, step: usize) -> Result<()> {
    let magnitude = x.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if magnitude > DIVERGENCE_LIMIT {
        Err(Error::UnstableSimulation { step, magnitude })
    } else {
        Ok(())
    }
}

/// Integrate the reservoir from `r0` at `grid.t0` and record the state at
/// every grid row.
///
/// Linear reservoirs driven by a multi-sine are propagated exactly: the
/// state splits into the analytic steady-state response plus a transient
/// advanced by `exp(gamma (A - I) tau)`. Linear modal reservoirs driven by
/// samples integrate a piecewise-linear input exactly. Everything else uses
/// RK4 with step `tau`; ReLU is integrated as-is despite its kink.
pub fn simulate<'a>(
    reservoir: impl Into<ReservoirRef<'a>>,
    drive: &dyn Drive,
    grid: TimeGrid,
    r0: &DVector<f64>,
    opts: SimulationOptions,
) -> Result<StateMatrix> {
    let res = reservoir.into();
    if r0.len() != res.n() {
        return Err(Error::InvalidArgument(format!(
            "initial state has length {}, expected {}",
            r0.len(),
            res.n()
        )));
    }
    let linear = opts.activation == Activation::Identity;
    let states = match (opts.integrator, linear, drive.as_multisine(), drive.as_series(), res) {
        (Integrator::Auto, true, Some(tones), _, _) => exact_multisine(res, tones, grid, r0)?,
        (Integrator::Auto, true, None, Some(series), ReservoirRef::Modal(m)) => {
            exact_first_order_hold(m, series, grid, r0)?
        }
        _ => rk4(res, drive, grid, r0, opts.activation)?,
    };
    Ok(StateMatrix::new(states, grid, opts.bias_column))
}

/// Complex steady-state phasors `X_k = (j w_k - M)^{-1} gamma d` per tone.
fn steady_phasors(res: ReservoirRef<'_>, tones: &MultiSineSignal) -> Result<Vec<Vec<Complex64>>> {
    let gamma = res.gamma();
    let n = res.n();
    tones
        .tones()
        .iter()
        .map(|tone| match res {
            ReservoirRef::Modal(m) => Ok((0..n)
                .map(|i| {
                    Complex64::new(gamma * m.mask()[i], 0.0)
                        / Complex64::new(-m.pole(i), tone.omega)
                })
                .collect()),
            ReservoirRef::Coupled(t) => {
                let a = t.adjacency();
                let lhs = DMatrix::from_fn(n, n, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    Complex64::new(-gamma * (a[(i, j)] - delta), tone.omega * delta)
                });
                let rhs = DVector::from_iterator(
                    n,
                    t.mask().iter().map(|&d| Complex64::new(gamma * d, 0.0)),
                );
                lhs.lu()
                    .solve(&rhs)
                    .map(|x| x.iter().cloned().collect())
                    .ok_or(Error::SingularSystem { condition: f64::INFINITY })
            }
        })
        .collect()
}

fn steady_state_at(
    tones: &MultiSineSignal,
    phasors: &[Vec<Complex64>],
    n: usize,
    t: f64,
) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    for (tone, xk) in tones.tones().iter().zip(phasors) {
        let rot = Complex64::from_polar(tone.amplitude, tone.omega * t + tone.phase);
        for (xi, p) in x.iter_mut().zip(xk) {
            *xi += (p * rot).re;
        }
    }
    x
}

fn exact_multisine(
    res: ReservoirRef<'_>,
    tones: &MultiSineSignal,
    grid: TimeGrid,
    r0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = res.n();
    let phasors = steady_phasors(res, tones)?;
    let propagate: Box<dyn Fn(&DVector<f64>) -> DVector<f64>> = match res {
        ReservoirRef::Modal(m) => {
            let decay: Vec<f64> = (0..n).map(|i| (m.pole(i) * grid.tau).exp()).collect();
            Box::new(move |x: &DVector<f64>| {
                DVector::from_iterator(n, x.iter().zip(&decay).map(|(v, e)| v * e))
            })
        }
        ReservoirRef::Coupled(t) => {
            let gen = (t.adjacency() - DMatrix::identity(n, n)) * (t.gamma() * grid.tau);
            let step = gen.exp();
            Box::new(move |x: &DVector<f64>| &step * x)
        }
    };
    let mut out = DMatrix::zeros(grid.steps, n);
    let mut transient = r0 - steady_state_at(tones, &phasors, n, grid.t0);
    for row in 0..grid.steps {
        transient = propagate(&transient);
        let x = steady_state_at(tones, &phasors, n, grid.row_time(row)) + &transient;
        check_state(&x, row)?;
        out.set_row(row, &x.transpose());
    }
    Ok(out)
}

/// `(e^z - 1)/z` and `(e^z - 1 - z)/z^2`, stable near zero.
fn phi_functions(z: f64) -> (f64, f64) {
    if z.abs() < 1e-4 {
        (1.0 + z / 2.0 + z * z / 6.0, 0.5 + z / 6.0 + z * z / 24.0)
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (em1 - z) / (z * z))
    }
}

fn exact_first_order_hold(
    m: &ModalReservoir,
    series: &SampledSeries,
    grid: TimeGrid,
    r0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = m.n();
    let h = grid.tau;
    let coeffs: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let z = m.pole(i) * h;
            let (p1, p2) = phi_functions(z);
            (z.exp(), p1, p2)
        })
        .collect();
    let gamma = m.gamma();
    let mut out = DMatrix::zeros(grid.steps, n);
    let mut x = r0.clone();
    let mut t = grid.t0;
    let mut u0 = series.interpolate(t);
    for row in 0..grid.steps {
        let t1 = grid.row_time(row);
        let u1 = series.interpolate(t1);
        for i in 0..n {
            let (e, p1, p2) = coeffs[i];
            x[i] = e * x[i] + gamma * m.mask()[i] * h * (u0 * p1 + (u1 - u0) * p2);
        }
        check_state(&x, row)?;
        out.set_row(row, &x.transpose());
        t = t1;
        u0 = u1;
    }
    debug_assert!((t - grid.end()).abs() < 1e-9 * grid.end().abs().max(1.0));
    Ok(out)
}

fn rk4(
    res: ReservoirRef<'_>,
    drive: &dyn Drive,
    grid: TimeGrid,
    r0: &DVector<f64>,
    act: Activation,
) -> Result<DMatrix<f64>> {
    let gamma = res.gamma();
    let mask = res.mask();
    let rhs = |x: &DVector<f64>, t: f64| -> DVector<f64> {
        let mut pre = res.couple(x);
        pre.axpy(drive.value_at(t), &mask, 1.0);
        let mut dx = pre.map(|v| act.apply(v));
        dx -= x;
        dx * gamma
    };
    let h = grid.tau;
    let mut out = DMatrix::zeros(grid.steps, res.n());
    let mut x = r0.clone();
    for row in 0..grid.steps {
        // Recompute t from the row index to avoid drift over long runs.
        let t = grid.t0 + row as f64 * h;
        let k1 = rhs(&x, t);
        let k2 = rhs(&(&x + &k1 * (h / 2.0)), t + h / 2.0);
        let k3 = rhs(&(&x + &k2 * (h / 2.0)), t + h / 2.0);
        let k4 = rhs(&(&x + &k3 * h), t + h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check_state(&x, row)?;
        out.set_row(row, &x.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{decouple, generate_random_topology};
    use crate::signals::{sample, three_tone_task};
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_evolution_is_exponential_decay() {
        let m = ModalReservoir::new(vec![-0.5, 0.2], vec![1.0, -1.0], 6.0).unwrap();
        let silent = MultiSineSignal::from_triples(&[(1.0, 0.0, 0.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        let q0 = DVector::from_vec(vec![1.5, -2.0]);
        for integrator in [Integrator::Auto, Integrator::Rk4] {
            let s = simulate(&m, &silent, grid, &q0, SimulationOptions::linear().integrator(integrator)).unwrap();
            for row in 0..grid.steps {
                let t = grid.row_time(row);
                for i in 0..2 {
                    let want = q0[i] * (m.pole(i) * t).exp();
                    let tol = if integrator == Integrator::Auto { 1e-12 } else { 1e-4 };
                    assert!((s.states[(row, i)] - want).abs() <= tol * want.abs(), "{integrator:?}");
                }
            }
        }
    }

    /// Exact solution of one driven mode, by quadrature of the convolution
    /// integral with a fine composite Simpson rule.
    fn convolution_oracle(pole: f64, gain: f64, q0: f64, u: &MultiSineSignal, t: f64) -> f64 {
        let n = 20_000;
        let h = t / n as f64;
        let f = |s: f64| (pole * (t - s)).exp() * u.eval(s);
        let mut acc = f(0.0) + f(t);
        for k in 1..n {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        (pole * t).exp() * q0 + gain * acc * h / 3.0
    }

    #[test]
    fn driven_mode_matches_convolution_integral() {
        let (u, _) = three_tone_task();
        let m = ModalReservoir::new(vec![-2.0, 0.3], vec![0.7, -1.2], 6.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 300).unwrap();
        let q0 = DVector::from_vec(vec![0.4, -0.1]);
        let s = simulate(&m, &u, grid, &q0, SimulationOptions::linear()).unwrap();
        for &row in &[0usize, 17, 120, 299] {
            let t = grid.row_time(row);
            for i in 0..2 {
                let want = convolution_oracle(m.pole(i), 6.0 * m.mask()[i], q0[i], &u, t);
                let got = s.states[(row, i)];
                assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-3), "row {row} mode {i}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn single_mode_settles_to_closed_form_gain_and_lag() {
        let m = ModalReservoir::new(vec![0.0], vec![1.0], 6.0).unwrap();
        let u = MultiSineSignal::from_triples(&[(1.0, 1.0, 0.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 4000).unwrap();
        let s = simulate(&m, &u, grid, &DVector::zeros(1), SimulationOptions::linear().integrator(Integrator::Rk4)).unwrap();
        // Least-squares fit of a cos t + b sin t after washout.
        let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for row in 2000..4000 {
            let t = grid.row_time(row);
            let (c, sn) = (t.cos(), t.sin());
            let y = s.states[(row, 0)];
            cc += c * c;
            ss += sn * sn;
            cs += c * sn;
            yc += y * c;
            ys += y * sn;
        }
        let det = cc * ss - cs * cs;
        let a = (yc * ss - ys * cs) / det;
        let b = (ys * cc - yc * cs) / det;
        let amp = a.hypot(b);
        let lag = b.atan2(a);
        assert_abs_diff_eq!(amp, 6.0 / 37f64.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(amp, 0.98639, epsilon = 1e-5);
        assert_abs_diff_eq!(lag, (1.0f64 / 6.0).atan(), epsilon = 1e-6);
        assert_abs_diff_eq!(lag, 0.16515, epsilon = 1e-5);
    }

    #[test]
    fn coupled_and_modal_trajectories_are_related_by_eigenvectors() {
        let (u, _) = three_tone_task();
        let top = generate_random_topology(12, 0.5, true, -0.1, 6.0, 77).unwrap();
        let (m, v) = decouple(&top).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 1500).unwrap();
        let r0 = DVector::from_fn(12, |i, _| (i as f64 * 0.37).sin());
        let q0 = v.transpose() * &r0;
        let r = simulate(&top, &u, grid, &r0, SimulationOptions::linear()).unwrap();
        let q = simulate(&m, &u, grid, &q0, SimulationOptions::linear()).unwrap();
        let diff = (&r.states * &v - &q.states).amax();
        assert!(diff < 1e-10, "{diff}");
        let rk = simulate(&top, &u, grid, &r0, SimulationOptions::linear().integrator(Integrator::Rk4)).unwrap();
        assert!((&rk.states * &v - &q.states).amax() < 1e-4);
    }

    #[test]
    fn sampled_drive_tracks_analytic_drive() {
        let (u, _) = three_tone_task();
        let m = ModalReservoir::new(vec![-3.0, -0.4, 0.1], vec![1.0, 0.5, -0.8], 6.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 1000).unwrap();
        let series = sample(&u, 1001, 0.01, 0.0).unwrap();
        let q0 = DVector::zeros(3);
        let exact = simulate(&m, &u, grid, &q0, SimulationOptions::linear()).unwrap();
        let held = simulate(&m, &series, grid, &q0, SimulationOptions::linear()).unwrap();
        // Linear interpolation of the input costs O(tau^2 w^2) relative accuracy.
        assert!((&exact.states - &held.states).amax() < 5e-3 * exact.states.amax());
    }

    #[test]
    fn silent_linear_reservoir_energy_never_grows() {
        let top = generate_random_topology(15, 0.5, false, -0.1, 6.0, 3).unwrap();
        let silent = MultiSineSignal::from_triples(&[(1.0, 0.0, 0.0)]).unwrap();
        let r0 = DVector::from_fn(15, |i, _| 1.0 - 0.1 * i as f64);
        let s = simulate(&top, &silent, TimeGrid::new(0.0, 0.01, 500).unwrap(), &r0, SimulationOptions::linear()).unwrap();
        let mut prev = r0.norm();
        for row in s.states.row_iter() {
            let now = row.norm();
            assert!(now <= prev * (1.0 + 1e-12));
            prev = now;
        }
    }

    #[test]
    fn nonlinear_activations_stay_bounded() {
        let (u, _) = three_tone_task();
        let top = crate::reservoir::generate_echo_state_topology(20, 0.5, true, 0.9, 6.0, 1).unwrap();
        for act in [Activation::Tanh, Activation::Relu] {
            let s = simulate(&top, &u, TimeGrid::new(0.0, 0.01, 1000).unwrap(), &DVector::zeros(20), SimulationOptions::linear().activation(act).with_bias()).unwrap();
            assert!(s.states.iter().all(|x| x.is_finite()));
            assert_eq!(s.states.ncols(), 21);
            if act == Activation::Tanh {
                assert!(s.states.columns(0, 20).amax() <= 1.0);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        // A reservoir at the stability edge driven by RK4 with a huge step.
        let m = ModalReservoir::new(vec![-1e6], vec![1.0], 6.0).unwrap();
        let u = MultiSineSignal::from_triples(&[(1.0, 1.0, 0.0)]).unwrap();
        let err = simulate(&m, &u, TimeGrid::new(0.0, 0.01, 100).unwrap(), &DVector::zeros(1), SimulationOptions::linear().integrator(Integrator::Rk4));
        assert!(matches!(err, Err(Error::UnstableSimulation { .. })));
    }

    #[test]
    fn rejects_wrong_initial_state() {
        let m = ModalReservoir::new(vec![-1.0], vec![1.0], 6.0).unwrap();
        let u = MultiSineSignal::from_triples(&[(1.0, 1.0, 0.0)]).unwrap();
        assert!(simulate(&m, &u, TimeGrid::new(0.0, 0.01, 3).unwrap(), &DVector::zeros(2), SimulationOptions::linear()).is_err());
    }
}
