// A small node-count sweep comparing the optimised reservoir with the
// random linear and nonlinear baselines.

use linres::benchmarks::{run_sweep, BenchmarkSettings, ScenarioSpec};
use linres::optimizer::OptimizerConfig;

pub fn run_example() -> linres::Result<()> {
    let spec = ScenarioSpec { sweep_values: vec![5, 10], trials: 2, seed: 3, ..ScenarioSpec::default() };
    let settings = BenchmarkSettings { train_steps: 1500, test_steps: 500, washout: 300, ..BenchmarkSettings::default() };
    let optimizer = OptimizerConfig { restarts: 4, ..OptimizerConfig::default() };
    let report = run_sweep(&spec, &settings, &optimizer)?;
    for c in &report.cells {
        println!("N={:<3} {:<14} {:.4} ± {:.4}", c.sweep_value, c.method.name(), c.mean_train, c.std_train);
    }
    report.write_csv(std::io::sink())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
