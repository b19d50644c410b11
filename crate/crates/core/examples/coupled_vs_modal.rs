// Fit unregularised readouts on a coupled reservoir and on its modal
// decomposition; the achievable error is the same in both frames.

use linres::checks::{check_coupled, coupled_case, TheoremCheckConfig};
use linres::signals::three_tone_task;

pub fn run_example() -> linres::Result<()> {
    let (u, y) = three_tone_task();
    let config = TheoremCheckConfig { n_max: 6, steps: 1500, ..TheoremCheckConfig::default() };
    for index in 0..3 {
        let top = coupled_case(&config, 5, index)?;
        let r = check_coupled(&config, &top, &u, &y, false)?;
        println!(
            "n={:<2} eps coupled {:.10e}  decoupled {:.10e}  fit difference {:.2e}",
            r.n, r.eps_coupled, r.eps_decoupled, r.fit_difference
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
