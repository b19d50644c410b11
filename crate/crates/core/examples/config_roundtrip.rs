// Build an experiment config in code, render it as TOML, and read it back
// with an override the way the command line does.

use linres::config::Config;

pub fn run_example() -> linres::Result<()> {
    let mut config = Config::default();
    config.optimizer.restarts = 8;
    let text = toml::to_string(&config).map_err(|e| linres::Error::Config(e.to_string()))?;
    let parsed = Config::from_toml(&text, &["optimizer.beta2=0.0".to_string()])?;
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    println!("restarts {} beta2 {} hash {}", parsed.optimizer.restarts, parsed.optimizer.beta2, &parsed.hash()[..16]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> linres::Result<()> {
    run_example()
}
