// Gain and phase lag of single modes across frequency: each mode is a
// first-order low-pass filter with corner `gamma (1 - lambda)`.

use linres::reservoir::{transfer_response, ModalReservoir};

pub fn run_example() -> linres::Result<()> {
    let modal = ModalReservoir::new(vec![0.0, -1.0, -5.0], vec![1.0, 1.0, 1.0], 6.0)?;
    let omegas: Vec<f64> = (0..6).map(|k| 10f64.powf(-1.0 + 0.5 * k as f64)).collect();
    let resp = transfer_response(&modal, &omegas)?;
    for (k, w) in omegas.iter().enumerate() {
        let cells: Vec<String> = (0..modal.n())
            .map(|i| format!("{:.4} / {:.4}", resp.magnitude[(k, i)], resp.phase[(k, i)]))
            .collect();
        println!("omega {w:>8.3}  {}", cells.join("   "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
