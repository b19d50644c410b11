// Train the same modal reservoir in the time domain and from its
// frequency-domain design matrix, and compare the two fits.

use linres::regression::verify_theorem2;
use linres::reservoir::{ModalReservoir, TimeGrid};
use linres::signals::MultiSineSignal;

pub fn run_example() -> linres::Result<()> {
    // 25 s after washout: bin spacing 2π/25, tones on bins 4, 12 and 19.
    let bin = 2.0 * std::f64::consts::PI / 25.0;
    let u = MultiSineSignal::from_triples(&[(4.0 * bin, 1.0, 0.0), (12.0 * bin, 1.5, 0.4), (19.0 * bin, 0.8, -1.0)])?;
    let y = MultiSineSignal::from_triples(&[(4.0 * bin, 2.0, 0.3), (12.0 * bin, 0.5, -0.2), (19.0 * bin, 1.2, 2.0)])?;
    let modal = ModalReservoir::new(vec![-0.2, -1.5, -4.0, -9.0, -15.0], vec![1.0, -0.7, 1.3, 0.4, -1.1], 6.0)?;
    let report = verify_theorem2(&modal, &u, &y, TimeGrid::new(0.0, 0.01, 3000)?, 500, 1e-7)?;
    println!("time-domain NRMSE      {:.6e}", report.nrmse_time);
    println!("frequency-domain NRMSE {:.6e}", report.nrmse_frequency);
    println!("relative deviation     {:.3e}", report.nrmse_relative_deviation);
    println!("bias weight            {:.3e}", report.bias_weight);
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
