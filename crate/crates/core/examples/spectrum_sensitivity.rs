// Push an optimised spectrum down by random amounts and watch the training
// error as the perturbation grows.

use linres::benchmarks::sensitivity_study;
use linres::optimizer::{optimize, OptimizerConfig, Problem};
use linres::reservoir::TimeGrid;
use linres::signals::three_tone_task;

pub fn run_example() -> linres::Result<()> {
    let (u, y) = three_tone_task();
    let mask = [0.7, -1.2, 0.3, 1.9, -0.5, 0.8];
    let config = OptimizerConfig { n_modes: 6, restarts: 6, ..OptimizerConfig::default() };
    let result = optimize(&config, &u, &y, &mask)?;
    let problem = Problem::new(&config, &u, &y, &result.mask)?;
    let study = sensitivity_study(&problem, &result.lambdas, &[0.0, 0.01, 0.1, 1.0, 5.0], 5, 2, TimeGrid::new(0.0, 0.01, 2000)?)?;
    println!("unperturbed NRMSE {:.4e}", study.optimum_nrmse);
    for row in &study.rows {
        println!("epsilon {:<5} mean NRMSE {:.4e}", row.epsilon, row.mean_nrmse);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
