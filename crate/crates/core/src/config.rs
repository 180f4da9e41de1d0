//! Layered configuration: preset defaults, then a TOML file, then `--set`
//! overrides, then `CYCLERL_SECTION__KEY` environment variables. Unknown keys
//! are rejected at every layer.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{ControllerKind, LqrConfig, PidConfig};
use crate::dynamics::{ActuatorModel, DisturbanceConfig, PhysicalParams};
use crate::env::randomization::RandomizationSpec;
use crate::env::reward::RewardConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::scenario::{DESK_EPISODES, PAPER_EPISODES};
use crate::eval::EvalOptions;
use crate::ppo::TrainConfig;

pub const ENV_PREFIX: &str = "CYCLERL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub params: PhysicalParams<f64>,
    pub actuator: ActuatorModel<f64>,
    pub disturbance: DisturbanceConfig<f64>,
    /// Control period, s.
    pub control_dt: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub max_episode_steps: u32,
    /// rad
    pub termination_roll: f64,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesSection {
    pub pid: PidConfig,
    pub lqr: LqrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub seed: u64,
    pub scenario: String,
    pub episodes: usize,
    pub recovery: bool,
    pub recovery_trials: usize,
    pub thresholds: bool,
    pub probe_episodes: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    /// State broadcast rate, Hz.
    pub state_hz: f64,
    pub controller: ControllerKind,
    pub checkpoint: Option<PathBuf>,
    /// Directory of the static UI bundle.
    pub static_dir: PathBuf,
    pub scenario: String,
    /// Commands in force before any operator connects.
    pub v_cmd: f64,
    pub delta_cmd_deg: f64,
    /// Delay between a fall and the automatic reset, s.
    pub fall_reset_s: f64,
    pub seed: u64,
}

/// Every tunable constant, grouped by module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub preset: String,
    pub dynamics: DynamicsSection,
    pub env: EnvSection,
    pub reward: RewardConfig,
    pub randomization: RandomizationSpec,
    pub ppo: TrainConfig,
    pub baselines: BaselinesSection,
    pub eval: EvalSection,
    pub serve: ServeSection,
}

impl Config {
    /// Built-in values for `desk` or `paper`.
    pub fn preset(name: &str) -> Result<Self> {
        let env = EnvConfig::default();
        let (ppo, episodes) = match name {
            "desk" => (TrainConfig::desk(), DESK_EPISODES),
            "paper" => (TrainConfig::paper(), PAPER_EPISODES),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (desk, paper)"
                )))
            }
        };
        let eval_defaults = EvalOptions::default();
        Ok(Self {
            preset: name.into(),
            dynamics: DynamicsSection {
                params: env.base_params,
                actuator: env.actuator,
                disturbance: env.disturbance,
                control_dt: env.control_dt,
                substeps: env.substeps,
            },
            env: EnvSection {
                max_episode_steps: env.max_episode_steps,
                termination_roll: env.termination_roll,
                dropout_rate: env.dropout_rate,
            },
            reward: env.reward,
            randomization: env.randomization,
            ppo,
            baselines: BaselinesSection {
                pid: PidConfig::default(),
                lqr: LqrConfig::default(),
            },
            eval: EvalSection {
                seed: 0,
                scenario: "nominal".into(),
                episodes,
                recovery: eval_defaults.recovery,
                recovery_trials: eval_defaults.recovery_trials,
                thresholds: eval_defaults.thresholds,
                probe_episodes: eval_defaults.probe_episodes,
                workers: 1,
            },
            serve: ServeSection {
                host: "127.0.0.1".into(),
                port: 8080,
                state_hz: 20.0,
                controller: ControllerKind::Lqr,
                checkpoint: None,
                static_dir: PathBuf::from("ui"),
                scenario: "flat".into(),
                v_cmd: 2.0,
                delta_cmd_deg: 0.0,
                fall_reset_s: 1.0,
                seed: 0,
            },
        })
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            control_dt: self.dynamics.control_dt,
            substeps: self.dynamics.substeps,
            max_episode_steps: self.env.max_episode_steps,
            termination_roll: self.env.termination_roll,
            dropout_rate: self.env.dropout_rate,
            base_params: self.dynamics.params,
            disturbance: self.dynamics.disturbance,
            actuator: self.dynamics.actuator,
            reward: self.reward,
            randomization: self.randomization.clone(),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            preset: self.preset.clone(),
            recovery: self.eval.recovery,
            recovery_trials: self.eval.recovery_trials,
            thresholds: self.eval.thresholds,
            probe_episodes: self.eval.probe_episodes,
            workers: self.eval.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.ppo.validate()?;
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be >= 1".into()));
        }
        if !(self.serve.state_hz > 0.0 && self.serve.state_hz <= 50.0) {
            return Err(Error::Config("serve.state_hz must lie in (0, 50]".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Inputs of [`resolve`] in precedence order.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    /// `section.key=value` pairs from the command line.
    pub overrides: Vec<String>,
    /// Environment variables; only `CYCLERL_`-prefixed names are used.
    pub env: Vec<(String, String)>,
}

impl Layers {
    pub fn with_process_env(mut self) -> Self {
        self.env = std::env::vars().collect();
        self
    }
}

/// Merges the layers into a validated configuration.
pub fn resolve(layers: &Layers) -> Result<Config> {
    let preset = layers.preset.as_deref().unwrap_or("desk");
    let mut tree = serde_json::to_value(Config::preset(preset)?)?;
    if let Some(path) = &layers.file {
        merge(&mut tree, read_file(path)?, "")?;
    }
    for item in &layers.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        set_path(&mut tree, &path, parse_scalar(raw.trim()), key)?;
    }
    let mut env: Vec<&(String, String)> = layers
        .env
        .iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env.sort();
    for (name, raw) in env {
        let path: Vec<String> = name[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        set_path(&mut tree, &path, parse_scalar(raw.trim()), name)?;
    }
    let cfg: Config = serde_json::from_value(tree)
        .map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
    if cfg.preset != preset && layers.preset.is_some() {
        return Err(Error::Config(
            "preset may not be overridden by later layers".into(),
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(Error::from)
}

/// TOML literal when it parses as one, otherwise a bare string.
fn parse_scalar(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Overlays `src` onto `dst`; every key must already exist.
fn merge(dst: &mut Value, src: Value, at: &str) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let here = if at.is_empty() {
                    k.clone()
                } else {
                    format!("{at}.{k}")
                };
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(Error::Config(format!("unknown key '{here}'"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_path(tree: &mut Value, path: &[String], value: Value, origin: &str) -> Result<()> {
    let mut node = tree;
    for (i, k) in path.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(Error::Config(format!(
                "'{origin}': '{}' is not a section",
                path[..i].join(".")
            )));
        };
        if !map.contains_key(k) {
            return Err(Error::Config(format!(
                "'{origin}': unknown key '{}'",
                path[..=i].join(".")
            )));
        }
        node = map.get_mut(k).expect("checked above");
    }
    *node = value;
    Ok(())
}
