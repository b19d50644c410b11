//! Multi-sine signals: construction, sampling, and recovery of the tones
//! shared by an input/target pair.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cosine component `amplitude * cos(omega * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Angular frequency in rad/s.
    pub omega: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Tone {
    pub fn new(omega: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            omega,
            amplitude,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).cos()
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// A finite sum of cosines at distinct positive frequencies, kept sorted by
/// frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tone>", into = "Vec<Tone>")]
pub struct MultiSineSignal {
    tones: Vec<Tone>,
}

impl MultiSineSignal {
    pub fn new(mut tones: Vec<Tone>) -> Result<Self> {
        for t in &tones {
            if !(t.omega.is_finite() && t.omega > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tone frequency must be positive, got {}",
                    t.omega
                )));
            }
            if !(t.amplitude.is_finite() && t.amplitude >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tone amplitude must be non-negative, got {}",
                    t.amplitude
                )));
            }
            if !t.phase.is_finite() {
                return Err(Error::InvalidArgument("tone phase must be finite".into()));
            }
        }
        tones.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        if tones.windows(2).any(|w| w[0].omega == w[1].omega) {
            return Err(Error::InvalidArgument(
                "tone frequencies must be pairwise distinct".into(),
            ));
        }
        for t in &mut tones {
            t.phase = wrap_phase(t.phase);
        }
        Ok(Self { tones })
    }

    /// Convenience constructor from `(omega, amplitude, phase)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(w, a, p)| Tone::new(w, a, p))
                .collect(),
        )
    }

    pub fn tones(&self) -> &[Tone] {
        &self.tones
    }

    pub fn len(&self) -> usize {
        self.tones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tones.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.tones.iter().map(|t| t.omega).collect()
    }

    pub fn max_omega(&self) -> f64 {
        self.tones.last().map_or(0.0, |t| t.omega)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.tones.iter().map(|tone| tone.eval(t)).sum()
    }

    /// Component-wise sum. Tones at equal frequency are merged as phasors.
    pub fn superpose(&self, other: &Self) -> Result<Self> {
        let mut merged: Vec<Tone> = Vec::with_capacity(self.len() + other.len());
        for tone in self.tones.iter().chain(&other.tones) {
            match merged.iter_mut().find(|m| m.omega == tone.omega) {
                Some(m) => {
                    let z = Complex64::from_polar(m.amplitude, m.phase)
                        + Complex64::from_polar(tone.amplitude, tone.phase);
                    m.amplitude = z.norm();
                    m.phase = z.arg();
                }
                None => merged.push(*tone),
            }
        }
        Self::new(merged)
    }

    /// True when both signals carry exactly the same frequency set.
    pub fn shares_frequencies(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .tones
                .iter()
                .zip(&other.tones)
                .all(|(a, b)| a.omega == b.omega)
    }
}

impl TryFrom<Vec<Tone>> for MultiSineSignal {
    type Error = Error;
    fn try_from(tones: Vec<Tone>) -> Result<Self> {
        Self::new(tones)
    }
}

impl From<MultiSineSignal> for Vec<Tone> {
    fn from(s: MultiSineSignal) -> Self {
        s.tones
    }
}

/// The three-tone observation task used throughout the examples:
/// `u(t) = 1.1cos(t) + 1.7cos(3t) + 2.1cos(5t)` and
/// `y(t) = 2.2cos(t - 0.5) + cos(3t + 0.9) + 1.6cos(5t + 1.1)`.
pub fn three_tone_task() -> (MultiSineSignal, MultiSineSignal) {
    let u = MultiSineSignal::from_triples(&[(1.0, 1.1, 0.0), (3.0, 1.7, 0.0), (5.0, 2.1, 0.0)])
        .expect("static signal is valid");
    let y = MultiSineSignal::from_triples(&[(1.0, 2.2, -0.5), (3.0, 1.0, 0.9), (5.0, 1.6, 1.1)])
        .expect("static signal is valid");
    (u, y)
}

/// Uniformly sampled real series starting at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub values: Vec<f64>,
    pub tau: f64,
    pub t0: f64,
}

impl SampledSeries {
    pub fn new(values: Vec<f64>, tau: f64, t0: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("series must hold at least one sample".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
        }
        Ok(Self { values, tau, t0 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.tau
    }

    /// Linear interpolation between samples, held constant outside the span.
    pub fn interpolate(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.tau;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let k = x.floor() as usize;
        let frac = x - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Two-column `time,value` CSV with 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.14e},{:.14e}", self.time(k), v)?;
        }
        Ok(())
    }
}

/// Sample `signal` at `t0 + k*tau` for `k = 0..len`.
pub fn sample(signal: &MultiSineSignal, len: usize, tau: f64, t0: f64) -> Result<SampledSeries> {
    if len == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let values = (0..len)
        .map(|k| signal.eval(t0 + k as f64 * tau))
        .collect();
    SampledSeries::new(values, tau, t0)
}

/// Tones common to an input/target pair, recovered from their spectra.
#[derive(Debug, Clone)]
pub struct CommonFrequencies {
    pub omegas: Vec<f64>,
    pub input: MultiSineSignal,
    pub target: MultiSineSignal,
}

fn spectrum(series: &SampledSeries) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = series.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Bins `1..=len/2` that are strict local maxima above `floor * max`.
fn peak_bins(mag: &[f64], floor: f64) -> Vec<bool> {
    let half = mag.len() / 2;
    let max = mag[1..=half].iter().cloned().fold(0.0, f64::max);
    let threshold = floor * max;
    let mut peaks = vec![false; mag.len()];
    for j in 1..=half {
        let left = mag[j - 1];
        let right = if j + 1 < mag.len() { mag[j + 1] } else { 0.0 };
        // The DC bin is never a candidate, but it still bounds bin 1.
        peaks[j] = mag[j] > threshold && mag[j] > left && mag[j] >= right;
    }
    peaks
}

/// Find the `k` dominant frequencies present in both `u` and `y` and estimate
/// each signal's amplitude and phase at them from the peak DFT bin.
///
/// Candidate bins must be local maxima of both magnitude spectra; they are
/// ranked by the smaller of the two magnitudes, ties going to the lower
/// frequency. Amplitudes are `2|X|/T` with no inter-bin interpolation, so
/// tones should sit on bin centres for accurate recovery.
pub fn extract_common_frequencies(
    u: &SampledSeries,
    y: &SampledSeries,
    k: usize,
) -> Result<CommonFrequencies> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if u.len() != y.len() || u.tau != y.tau || u.t0 != y.t0 {
        return Err(Error::InvalidArgument(
            "input and target series must share length, step and start".into(),
        ));
    }
    let n = u.len();
    if n < 3 {
        return Err(Error::FewerThanKCommonPeaks {
            requested: k,
            found: 0,
        });
    }
    let fu = spectrum(u);
    let fy = spectrum(y);
    let mu: Vec<f64> = fu.iter().map(|z| z.norm()).collect();
    let my: Vec<f64> = fy.iter().map(|z| z.norm()).collect();
    let pu = peak_bins(&mu, 1e-6);
    let py = peak_bins(&my, 1e-6);

    let mut common: Vec<usize> = (1..=n / 2).filter(|&j| pu[j] && py[j]).collect();
    if common.len() < k {
        return Err(Error::FewerThanKCommonPeaks {
            requested: k,
            found: common.len(),
        });
    }
    // Stable sort keeps ascending bin order among equal scores.
    common.sort_by(|&a, &b| mu[b].min(my[b]).total_cmp(&mu[a].min(my[a])));
    common.truncate(k);
    common.sort_unstable();

    let bin_omega = 2.0 * PI / (n as f64 * u.tau);
    let tone_at = |coeffs: &[Complex64], j: usize, omega: f64| {
        // A bin at exactly Nyquist carries the full amplitude in one coefficient.
        let scale = if 2 * j == n { 1.0 } else { 2.0 };
        let z = coeffs[j];
        Tone::new(omega, scale * z.norm() / n as f64, z.arg() - omega * u.t0)
    };
    let omegas: Vec<f64> = common.iter().map(|&j| j as f64 * bin_omega).collect();
    let input = MultiSineSignal::new(
        common
            .iter()
            .zip(&omegas)
            .map(|(&j, &w)| tone_at(&fu, j, w))
            .collect(),
    )?;
    let target = MultiSineSignal::new(
        common
            .iter()
            .zip(&omegas)
            .map(|(&j, &w)| tone_at(&fy, j, w))
            .collect(),
    )?;
    Ok(CommonFrequencies {
        omegas,
        input,
        target,
    })
}
