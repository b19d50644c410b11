// Recover the shared tones of two sampled signals from their spectra.

use linres::signals::{extract_common_frequencies, sample, MultiSineSignal};

pub fn run_example() -> linres::Result<()> {
    let u = MultiSineSignal::from_triples(&[(1.0, 1.1, 0.0), (3.0, 1.7, 0.0), (5.0, 2.1, 0.0)])?;
    let y = MultiSineSignal::from_triples(&[(1.0, 2.2, -0.5), (3.0, 1.0, 0.9), (5.0, 1.6, 1.1)])?;
    // 2π seconds of data puts every integer frequency on a DFT bin.
    let len = 4096;
    let tau = 2.0 * std::f64::consts::PI / len as f64;
    let found = extract_common_frequencies(&sample(&u, len, tau, 0.0)?, &sample(&y, len, tau, 0.0)?, 3)?;
    for (a, b) in found.input.tones().iter().zip(found.target.tones()) {
        println!(
            "omega {:.4}  input {:.4} @ {:+.4}  target {:.4} @ {:+.4}",
            a.omega, a.amplitude, a.phase, b.amplitude, b.phase
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
