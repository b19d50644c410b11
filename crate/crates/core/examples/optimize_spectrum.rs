// Optimise the eigenvalues of a 10-node reservoir for the three-tone task
// and compare with random spectra under the same readout.

use linres::optimizer::{optimize, OptimizerConfig, Problem};
use linres::reservoir::{ModalReservoir, TimeGrid};
use linres::signals::three_tone_task;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> linres::Result<()> {
    let (u, y) = three_tone_task();
    let mut rng = linres::rng::stream(1, "example.mask", 0);
    let mask: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
    let config = OptimizerConfig { n_modes: 10, restarts: 10, seed: 1, ..OptimizerConfig::default() };
    let result = optimize(&config, &u, &y, &mask)?;
    let grid = TimeGrid::new(0.0, 0.01, 3000)?;
    let (_, nrmse) = result.evaluate_fit(&u, &y, grid)?;
    println!("optimised eigenvalues {:?}", result.lambdas);
    println!("weighted error {:.4e}, training NRMSE {:.4e}", result.lowest_error, nrmse);

    let problem = Problem::new(&config, &u, &y, &mask)?;
    for _ in 0..3 {
        let lambdas: Vec<f64> = (0..10).map(|_| rng.gen_range(-20.0..0.0)).collect();
        let kappa = problem.optimal_kappa(&problem.system(&lambdas)?)?;
        let modal = ModalReservoir::new(lambdas, mask.clone(), 6.0)?;
        let (_, random) = linres::optimizer::evaluate_readout(&modal, &kappa, &u, &y, grid)?;
        println!("random spectrum training NRMSE {random:.4e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
