// Drive a random linear reservoir and its modal form with the same input
// and confirm that the modal states are the rotated node states.

use linres::reservoir::{decouple, generate_random_topology, simulate, SimulationOptions, TimeGrid};
use linres::signals::three_tone_task;
use nalgebra::DVector;

pub fn run_example() -> linres::Result<()> {
    let (u, _) = three_tone_task();
    let top = generate_random_topology(8, 0.5, true, -0.1, 6.0, 11)?;
    let (modal, v) = decouple(&top)?;
    let grid = TimeGrid::new(0.0, 0.01, 2000)?;
    let zero = DVector::zeros(top.n());
    let r = simulate(&top, &u, grid, &zero, SimulationOptions::linear())?;
    let q = simulate(&modal, &u, grid, &zero, SimulationOptions::linear())?;
    let rotated = &r.states * &v;
    println!("eigenvalues {:?}", modal.lambdas());
    println!("max |r V - q| = {:e}", (rotated - &q.states).amax());
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
