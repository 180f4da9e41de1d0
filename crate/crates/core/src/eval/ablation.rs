//! Reward-component and randomization-group ablations: one training run per
//! variant with identical seeds, evaluated on a nominal and a randomized suite.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{
    balance_success_rate, max_balance_duration, response_latency, tracking_errors,
};
use super::report::REPORT_SCHEMA_VERSION;
use super::runner::{run_episodes, ControllerSpec, EpisodeOptions};
use super::scenario::{ScenarioSpec, NOMINAL_DURATION};
use super::trace::Trace;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::{TrainConfig, Trainer};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMatrix {
    Reward,
    Randomization,
}

impl std::str::FromStr for AblationMatrix {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reward" => Ok(Self::Reward),
            "randomization" => Ok(Self::Randomization),
            other => Err(format!(
                "unknown ablation matrix '{other}' (reward, randomization)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: &'static str,
    pub env: EnvConfig,
}

/// The first variant is the baseline every other row is compared against.
pub fn variants(matrix: AblationMatrix, base: &EnvConfig) -> Vec<AblationVariant> {
    let with = |name, f: &dyn Fn(&mut EnvConfig)| {
        let mut env = base.clone();
        f(&mut env);
        AblationVariant { name, env }
    };
    match matrix {
        AblationMatrix::Reward => vec![
            with("Complete", &|_| {}),
            with("No Survival", &|e| e.reward.weights.surv = 0.0),
            with("No Velocity Tracking", &|e| e.reward.weights.vel = 0.0),
            with("No Steering Tracking", &|e| e.reward.weights.steer = 0.0),
            with("No Action Penalty", &|e| e.reward.weights.act = 0.0),
            with("No Rate Penalty", &|e| e.reward.weights.rate = 0.0),
        ],
        AblationMatrix::Randomization => vec![
            with("Full", &|e| {
                e.randomization.set_groups(true, true, true, true)
            }),
            with("No Randomization", &|e| {
                e.randomization.set_groups(false, false, false, false)
            }),
            with("Dynamics-Only", &|e| {
                e.randomization.set_groups(true, false, false, false)
            }),
            with("Initial States-Only", &|e| {
                e.randomization.set_groups(false, true, false, false)
            }),
            with("Command-Only", &|e| {
                e.randomization.set_groups(false, false, true, false)
            }),
            with("Terrain-Only", &|e| {
                e.randomization.set_groups(false, false, false, true)
            }),
        ],
    }
}

/// Trace metrics of one evaluation suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub bsr: f64,
    pub mbd: f64,
    pub ste: Option<f64>,
    pub vte: Option<f64>,
    pub srl: Option<f64>,
}

impl SuiteMetrics {
    pub fn of(traces: &[Trace]) -> Self {
        let t = tracking_errors(traces);
        Self {
            bsr: balance_success_rate(traces).unwrap_or(0.0),
            mbd: max_balance_duration(traces),
            ste: t.map(|t| t.ste),
            vte: t.map(|t| t.vte),
            srl: response_latency(traces).stats.map(|s| s.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub final_mean_episode_length: Option<f64>,
    pub nominal: SuiteMetrics,
    pub randomized: SuiteMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema_version: u32,
    pub matrix: AblationMatrix,
    pub seed: u64,
    pub epochs: usize,
    pub eval_episodes: usize,
    pub train: TrainConfig,
    pub rows: Vec<AblationRow>,
}

/// The two evaluation suites: nominal conditions and the full training
/// distribution (all four randomization groups on).
pub fn suite_configs(base: &EnvConfig) -> Result<(EnvConfig, EnvConfig)> {
    let nominal = ScenarioSpec::nominal().env_config(base)?;
    let mut randomized = base.clone();
    randomized.randomization.set_groups(true, true, true, true);
    randomized.max_episode_steps = (NOMINAL_DURATION / randomized.control_dt).round() as u32;
    Ok((nominal, randomized))
}

const PURPOSE_SUITE: u64 = 31;

fn suite(ctrl: &ControllerSpec, cfg: &EnvConfig, n: usize, seed: u64) -> Result<SuiteMetrics> {
    let opts = EpisodeOptions {
        record: true,
        ..EpisodeOptions::default()
    };
    let traces: Vec<Trace> = run_episodes(ctrl, cfg, n, seed, opts)?
        .into_iter()
        .filter_map(|o| o.trace)
        .collect();
    Ok(SuiteMetrics::of(&traces))
}

/// Trains and evaluates every variant of `matrix`.
pub fn run_ablation(
    matrix: AblationMatrix,
    train: &TrainConfig,
    base: &EnvConfig,
    eval_episodes: usize,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationTable> {
    if eval_episodes == 0 {
        return Err(Error::Config(
            "ablation needs at least one evaluation episode".into(),
        ));
    }
    let (nominal_cfg, randomized_cfg) = suite_configs(base)?;
    let eval_seed = derive_seed(train.seed, PURPOSE_SUITE);
    let mut rows = Vec::new();
    for v in variants(matrix, base) {
        let mut trainer = Trainer::new(train.clone(), v.env)?;
        let outcome = trainer.run(None, |_| {})?;
        let ctrl = ControllerSpec::Policy(Arc::new(trainer.policy.clone()));
        let row = AblationRow {
            name: v.name.into(),
            final_mean_episode_length: outcome
                .log
                .epochs
                .last()
                .and_then(|e| e.mean_episode_length),
            nominal: suite(&ctrl, &nominal_cfg, eval_episodes, eval_seed)?,
            randomized: suite(&ctrl, &randomized_cfg, eval_episodes, eval_seed)?,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationTable {
        schema_version: REPORT_SCHEMA_VERSION,
        matrix,
        seed: train.seed,
        epochs: train.epochs,
        eval_episodes,
        train: train.clone(),
        rows,
    })
}

/// One metric of one row next to its difference from the baseline row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub variant: String,
    pub suite: String,
    pub metric: String,
    pub value: Option<f64>,
    pub delta: Option<f64>,
}

const METRICS: [&str; 5] = ["bsr", "mbd", "ste", "vte", "srl"];

fn metric(m: &SuiteMetrics, name: &str) -> Option<f64> {
    match name {
        "bsr" => Some(m.bsr),
        "mbd" => Some(m.mbd),
        "ste" => m.ste,
        "vte" => m.vte,
        "srl" => m.srl,
        _ => None,
    }
}

impl AblationTable {
    pub fn delta_rows(&self) -> Vec<DeltaRow> {
        let Some(base) = self.rows.first() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for row in &self.rows {
            for (suite, m, b) in [
                ("nominal", &row.nominal, &base.nominal),
                ("randomized", &row.randomized, &base.randomized),
            ] {
                for name in METRICS {
                    let value = metric(m, name);
                    let delta = value.zip(metric(b, name)).map(|(v, b)| v - b);
                    out.push(DeltaRow {
                        variant: row.name.clone(),
                        suite: suite.into(),
                        metric: name.into(),
                        value,
                        delta,
                    });
                }
            }
        }
        out
    }

    pub fn write_delta_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.delta_rows() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Markdown table, each cell `value (+delta)` against the first row.
    pub fn format_markdown(&self, suite: &str) -> String {
        let mut s = format!(
            "| Variant | {} |\n|---|",
            METRICS.map(str::to_uppercase).join(" | ")
        );
        s.push_str(&"---|".repeat(METRICS.len()));
        s.push('\n');
        let rows = self.delta_rows();
        for row in &self.rows {
            let _ = write!(s, "| {} |", row.name);
            for name in METRICS {
                let cell = rows
                    .iter()
                    .find(|r| r.variant == row.name && r.suite == suite && r.metric == name)
                    .and_then(|r| r.value.zip(r.delta))
                    .map_or("n/a".to_string(), |(v, d)| format!("{v:.2} ({d:+.2})"));
                let _ = write!(s, " {cell} |");
            }
            s.push('\n');
        }
        s
    }
}
