//! Experiment configuration: one TOML file with `[signals]`, `[reservoir]`,
//! `[optimizer]`, `[benchmark]` and `[theorem]` sections, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{BenchmarkSettings, Method, ScenarioSpec, SignalGenerator, SweepMode};
use crate::checks::TheoremCheckConfig;
use crate::error::{Error, Result};
use crate::optimizer::OptimizerConfig;
use crate::reservoir::{generate_random_topology, Activation, ReservoirTopology, TimeGrid};
use crate::signals::{three_tone_task, MultiSineSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed for every random stream of a run.
    pub seed: u64,
    pub signals: SignalsConfig,
    pub reservoir: ReservoirConfig,
    pub optimizer: OptimizerConfig,
    pub benchmark: BenchmarkConfig,
    pub theorem: TheoremCheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            signals: SignalsConfig::default(),
            reservoir: ReservoirConfig::default(),
            optimizer: OptimizerConfig::default(),
            benchmark: BenchmarkConfig::default(),
            theorem: TheoremCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalsConfig {
    pub input: MultiSineSignal,
    pub target: MultiSineSignal,
}

impl Default for SignalsConfig {
    fn default() -> Self {
        let (input, target) = three_tone_task();
        Self { input, target }
    }
}

/// The physical reservoir and its simulation windows. Size and gain come
/// from `[optimizer]` (`n_modes`, `gamma`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub edge_prob: f64,
    pub weighted: bool,
    pub max_eig: f64,
    pub tau: f64,
    pub train_steps: usize,
    pub test_steps: usize,
    pub washout: usize,
    pub activation: Activation,
    /// Load this topology JSON instead of generating one.
    pub topology: Option<PathBuf>,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            edge_prob: 0.5,
            weighted: true,
            max_eig: -0.1,
            tau: 0.01,
            train_steps: 3000,
            test_steps: 3000,
            washout: 500,
            activation: Activation::Identity,
            topology: None,
        }
    }
}

impl ReservoirConfig {
    pub fn train_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.tau, self.train_steps)
    }

    pub fn test_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.train_steps as f64 * self.tau, self.tau, self.test_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub mode: SweepMode,
    pub fixed_value: usize,
    pub sweep_values: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub signals: SignalGenerator,
    pub settings: BenchmarkSettings,
    pub sensitivity: SensitivityConfig,
    pub beta_study: BetaStudyConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let spec = ScenarioSpec::default();
        Self {
            mode: spec.mode,
            fixed_value: spec.fixed_value,
            sweep_values: spec.sweep_values,
            trials: spec.trials,
            methods: spec.methods,
            signals: spec.signals,
            settings: BenchmarkSettings::default(),
            sensitivity: SensitivityConfig::default(),
            beta_study: BetaStudyConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn scenario(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            mode: self.mode,
            fixed_value: self.fixed_value,
            sweep_values: self.sweep_values.clone(),
            trials: self.trials,
            seed,
            methods: self.methods.clone(),
            signals: self.signals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub epsilons: Vec<f64>,
    pub trials: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.0, 0.001, 0.01, 0.1, 1.0, 5.0],
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaStudyConfig {
    pub beta1_values: Vec<f64>,
    pub beta2_values: Vec<f64>,
    pub trials: usize,
}

impl Default for BetaStudyConfig {
    fn default() -> Self {
        Self {
            beta1_values: vec![1e-2, 1e-4, 1e-7],
            beta2_values: vec![0.0, 1e-3, 1e-1],
            trials: 5,
        }
    }
}

impl Config {
    /// Parse TOML text, then apply `section.key=value` overrides, each value
    /// read as a TOML literal (bare words fall back to strings).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.optimizer.validate().map_err(wrap)?;
        self.benchmark.scenario(self.seed).validate().map_err(wrap)?;
        self.theorem.validate().map_err(wrap)?;
        if !self.signals.input.shares_frequencies(&self.signals.target) {
            return Err(Error::Config("[signals] input and target must share frequencies".into()));
        }
        if self.reservoir.train_steps <= self.reservoir.washout || self.reservoir.test_steps == 0 {
            return Err(Error::Config("[reservoir] needs train_steps > washout and test_steps > 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    /// The configured reservoir: loaded from `reservoir.topology` if set,
    /// otherwise a random ER graph seeded from the master seed.
    pub fn topology(&self) -> Result<ReservoirTopology> {
        match &self.reservoir.topology {
            Some(path) => ReservoirTopology::from_json(&std::fs::read_to_string(path)?),
            None => generate_random_topology(
                self.optimizer.n_modes,
                self.reservoir.edge_prob,
                self.reservoir.weighted,
                self.reservoir.max_eig,
                self.optimizer.gamma,
                crate::rng::derive_seed(self.seed, "config.topology", 0),
            ),
        }
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
