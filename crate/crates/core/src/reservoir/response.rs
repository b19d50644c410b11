use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

use super::{ModalReservoir, StateMatrix, TimeGrid};
use crate::error::{Error, Result};
use crate::signals::MultiSineSignal;

/// Steady-state gain and phase lag of every mode at every task frequency.
///
/// Row `k` is frequency `k`, column `i` is mode `i`. A unit cosine input at
/// `omega_k` drives mode `i` to `magnitude[(k,i)] * cos(omega_k t - phase[(k,i)])`.
/// The lag is `atan(omega / (gamma (1 - lambda)))`, plus `pi` for a negative
/// mask entry since the magnitude only carries `|c_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub magnitude: DMatrix<f64>,
    pub phase: DMatrix<f64>,
}

impl FrequencyResponse {
    /// `magnitude * e^{-j phase}`, the complex gain of mode `i` at frequency `k`.
    pub fn phasor(&self, k: usize, i: usize) -> Complex64 {
        Complex64::from_polar(self.magnitude[(k, i)], -self.phase[(k, i)])
    }
}

pub fn transfer_response(modal: &ModalReservoir, omegas: &[f64]) -> Result<FrequencyResponse> {
    if let Some(bad) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidArgument(format!("frequency {bad} must be positive")));
    }
    let gamma = modal.gamma();
    let (k, n) = (omegas.len(), modal.n());
    let mut magnitude = DMatrix::zeros(k, n);
    let mut phase = DMatrix::zeros(k, n);
    for (i, (&lambda, &c)) in modal.lambdas().iter().zip(modal.mask()).enumerate() {
        let decay = gamma * (1.0 - lambda);
        for (row, &w) in omegas.iter().enumerate() {
            magnitude[(row, i)] = gamma * c.abs() / w.hypot(decay);
            let lag = (w / decay).atan();
            phase[(row, i)] = if c < 0.0 { lag + PI } else { lag };
        }
    }
    Ok(FrequencyResponse { magnitude, phase })
}

/// Transient-free modal states driven by `input`, sampled on `grid`.
pub fn steady_state_series(
    modal: &ModalReservoir,
    input: &MultiSineSignal,
    grid: TimeGrid,
) -> Result<StateMatrix> {
    if input.is_empty() {
        return Err(Error::InvalidArgument("input signal has no tones".into()));
    }
    let resp = transfer_response(modal, &input.omegas())?;
    let n = modal.n();
    let states = DMatrix::from_fn(grid.steps, n, |row, i| {
        let t = grid.row_time(row);
        input
            .tones()
            .iter()
            .enumerate()
            .map(|(k, tone)| {
                tone.amplitude
                    * resp.magnitude[(k, i)]
                    * (tone.omega * t + tone.phase - resp.phase[(k, i)]).cos()
            })
            .sum()
    });
    Ok(StateMatrix::new(states, grid, false))
}
