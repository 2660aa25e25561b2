//! Run configuration: a single TOML file with thresholds, loss selection,
//! per-method training defaults, port endpoints, and IO paths.
//!
//! Precedence: built-in defaults, then the config file, then the
//! `UNLEARN_LAB_FIXTURES` environment variable (fixtures path only), then
//! command-line flags. Unknown keys are rejected and every offending key
//! is reported, not just the first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use unlearn_core::losses::{LossMethod, Regularizer};
use unlearn_core::neighborset::Thresholds;

use crate::clients::FIXTURES_ENV;
use crate::LabError;

/// Which published hyperparameter table seeds the per-method defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    RealWorld,
    Tofu,
}

/// Learning rate and epoch budget for one unlearning method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodParams {
    pub lr: f64,
    pub epochs: u32,
}

/// Default per-method hyperparameters for the real-world scenario.
pub fn real_world_defaults() -> BTreeMap<String, MethodParams> {
    BTreeMap::from([
        ("GA".to_string(), MethodParams { lr: 5e-6, epochs: 3 }),
        ("NPO".to_string(), MethodParams { lr: 3e-5, epochs: 3 }),
        ("IDK".to_string(), MethodParams { lr: 3e-6, epochs: 2 }),
        ("DPO".to_string(), MethodParams { lr: 8e-6, epochs: 4 }),
    ])
}

/// Default per-method hyperparameters for the TOFU scenario.
pub fn tofu_defaults() -> BTreeMap<String, MethodParams> {
    BTreeMap::from([
        ("GA".to_string(), MethodParams { lr: 2e-5, epochs: 4 }),
        ("NPO".to_string(), MethodParams { lr: 4e-5, epochs: 5 }),
        ("IDK".to_string(), MethodParams { lr: 2e-5, epochs: 2 }),
        ("DPO".to_string(), MethodParams { lr: 4e-5, epochs: 2 }),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub method: LossMethod,
    pub regularizer: Regularizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub reg_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            method: LossMethod::Ga,
            regularizer: Regularizer::None,
            beta: None,
            reg_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: u32,
}

impl Default for PortsConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            fixtures: None,
            max_concurrency: default_concurrency(),
        }
    }
}

fn default_concurrency() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub workdir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("."),
        }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: Scenario,
    pub thresholds: Thresholds,
    pub loss: LossConfig,
    /// Per-method lr/epochs; entries override the scenario defaults.
    pub methods: BTreeMap<String, MethodParams>,
    pub ports: PortsConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: Scenario::RealWorld,
            thresholds: Thresholds::default(),
            loss: LossConfig::default(),
            methods: BTreeMap::new(),
            ports: PortsConfig::default(),
            io: IoConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads from a TOML file (or defaults when absent), applies the
    /// fixtures environment override, and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, LabError> {
        let mut config = match path {
            Some(path) => {
                let contents =
                    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
                Self::parse(&contents)?
            }
            None => Self::default(),
        };
        if let Ok(dir) = std::env::var(FIXTURES_ENV) {
            if !dir.is_empty() {
                config.ports.fixtures = Some(PathBuf::from(dir));
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Parses TOML, reporting every unknown key rather than the first.
    pub fn parse(contents: &str) -> Result<Self, LabError> {
        let value: toml::Value = toml::from_str(contents)
            .map_err(|e| LabError::Config(vec![format!("not valid TOML: {e}")]))?;
        let mut errors = Vec::new();
        check_unknown_keys(&value, &mut errors);
        if !errors.is_empty() {
            return Err(LabError::Config(errors));
        }
        let config: RunConfig = value
            .try_into()
            .map_err(|e| LabError::Config(vec![e.to_string()]))?;
        Ok(config)
    }

    /// Per-method lr/epochs after applying scenario defaults.
    pub fn method_params(&self, method: LossMethod) -> MethodParams {
        let defaults = match self.scenario {
            Scenario::RealWorld => real_world_defaults(),
            Scenario::Tofu => tofu_defaults(),
        };
        let key = method.as_str();
        self.methods
            .get(key)
            .copied()
            .or_else(|| defaults.get(key).copied())
            .expect("defaults cover every method")
    }

    /// Collects every invalid field; valid configs pass untouched.
    pub fn validate(&self) -> Result<(), LabError> {
        let mut errors = Vec::new();
        let th = &self.thresholds;
        if !(0.0..=1.0).contains(&th.theta_low)
            || !(0.0..=1.0).contains(&th.theta_high)
            || th.theta_low >= th.theta_high
        {
            errors.push(format!(
                "thresholds: require 0 <= theta_low < theta_high <= 1, got {} and {}",
                th.theta_low, th.theta_high
            ));
        }
        if th.min_cluster_size < 2 {
            errors.push("thresholds.min_cluster_size: must be at least 2".to_string());
        }
        if self.loss.method.needs_beta() {
            match self.loss.beta {
                Some(beta) if beta > 0.0 => {}
                Some(beta) => errors.push(format!("loss.beta: must be positive, got {beta}")),
                None => errors.push(format!(
                    "loss.beta: required for method {}",
                    self.loss.method.as_str()
                )),
            }
        }
        if self.loss.reg_weight <= 0.0 {
            errors.push(format!(
                "loss.reg_weight: must be positive, got {}",
                self.loss.reg_weight
            ));
        }
        for (name, params) in &self.methods {
            if !matches!(name.as_str(), "GA" | "NPO" | "DPO" | "IDK") {
                errors.push(format!("methods.{name}: unknown method"));
            }
            if params.lr <= 0.0 {
                errors.push(format!("methods.{name}.lr: must be positive, got {}", params.lr));
            }
            if params.epochs == 0 {
                errors.push(format!("methods.{name}.epochs: must be at least 1"));
            }
        }
        if self.ports.max_concurrency == 0 {
            errors.push("ports.max_concurrency: must be at least 1".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(errors))
        }
    }
}

const TOP_KEYS: &[&str] = &["seed", "scenario", "thresholds", "loss", "methods", "ports", "io"];
const THRESHOLD_KEYS: &[&str] = &["theta_high", "theta_low", "min_cluster_size"];
const LOSS_KEYS: &[&str] = &["method", "regularizer", "beta", "reg_weight"];
const METHOD_KEYS: &[&str] = &["lr", "epochs"];
const PORT_KEYS: &[&str] = &["endpoint", "fixtures", "max_concurrency"];
const IO_KEYS: &[&str] = &["workdir"];

fn check_table(
    value: &toml::Value,
    prefix: &str,
    known: &[&str],
    errors: &mut Vec<String>,
) -> bool {
    let Some(table) = value.as_table() else {
        errors.push(format!("{prefix}: expected a table"));
        return false;
    };
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            errors.push(format!("unknown key: {prefix}{key}"));
        }
    }
    true
}

fn check_unknown_keys(value: &toml::Value, errors: &mut Vec<String>) {
    if !check_table(value, "", TOP_KEYS, errors) {
        return;
    }
    let table = value.as_table().expect("checked above");
    if let Some(v) = table.get("thresholds") {
        check_table(v, "thresholds.", THRESHOLD_KEYS, errors);
    }
    if let Some(v) = table.get("loss") {
        check_table(v, "loss.", LOSS_KEYS, errors);
    }
    if let Some(v) = table.get("ports") {
        check_table(v, "ports.", PORT_KEYS, errors);
    }
    if let Some(v) = table.get("io") {
        check_table(v, "io.", IO_KEYS, errors);
    }
    if let Some(v) = table.get("methods") {
        if let Some(methods) = v.as_table() {
            for (name, params) in methods {
                check_table(params, &format!("methods.{name}."), METHOD_KEYS, errors);
            }
        } else {
            errors.push("methods: expected a table".to_string());
        }
    }
}
