//! Metrics reports, the robustness table and their file forms.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    balance_success_rate, is_balanced, longest_balance, max_balance_duration, response_latency,
    tracking_errors, MeanStd,
};
use super::runner::{
    balance_recovery_time, critical_angle, run_episode_batch, threshold_search, Axis,
    ControllerSpec, CriticalAngle, RecoveryStats, Threshold,
};
use super::scenario::ScenarioSpec;
use super::trace::Trace;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON schema every [`MetricsReport`] validates against.
pub const METRICS_REPORT_SCHEMA: &str = include_str!("../../schemas/metrics_report.schema.json");

/// The nine-metric record of one (controller, scenario, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub episodes: usize,
    /// Scale label of the evaluation, e.g. `desk` (200 episodes) or `paper` (1,000).
    pub preset: String,
    /// Balance success rate, percent.
    pub bsr: f64,
    /// Balance recovery time, s.
    pub brt: Option<RecoveryStats>,
    /// Maximum balance duration, s.
    pub mbd: f64,
    /// Critical angle, deg.
    pub cat: Option<CriticalAngle>,
    /// Steering tracking error, deg RMS.
    pub ste: Option<f64>,
    /// Velocity tracking error, m/s mean absolute.
    pub vte: Option<f64>,
    pub tracking_samples: usize,
    /// Response latency, s.
    pub srl: Option<MeanStd>,
    pub srl_events: usize,
    pub srl_timeouts: usize,
    /// Maximum noise tolerance, fraction of channel range.
    pub mnt: Option<Threshold>,
    /// Minimum sustaining speed, m/s.
    pub mss: Option<Threshold>,
    pub falls: usize,
    pub mean_episode_steps: f64,
    pub scenario_spec: ScenarioSpec,
    /// Fully resolved configuration the numbers were produced with.
    pub config: serde_json::Value,
}

/// What to compute beyond the trace metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    pub preset: String,
    pub recovery: bool,
    pub recovery_trials: usize,
    pub thresholds: bool,
    pub probe_episodes: usize,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            recovery: true,
            recovery_trials: 50,
            thresholds: true,
            probe_episodes: 100,
            workers: 1,
        }
    }
}

impl EvalOptions {
    /// Trace metrics only.
    pub fn traces_only() -> Self {
        Self {
            recovery: false,
            thresholds: false,
            ..Self::default()
        }
    }
}

const PURPOSE_TRACES: u64 = 21;
const PURPOSE_RECOVERY: u64 = 22;

/// Evaluates one controller on one scenario.
pub fn evaluate(
    ctrl: &ControllerSpec,
    scenario: &ScenarioSpec,
    base: &EnvConfig,
    seed: u64,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Vec<Trace>)> {
    let traces = run_episode_batch(
        ctrl,
        scenario,
        base,
        derive_seed(seed, PURPOSE_TRACES),
        opts.workers,
    )?;
    let brt = if opts.recovery {
        Some(balance_recovery_time(
            ctrl,
            scenario,
            base,
            opts.recovery_trials,
            derive_seed(seed, PURPOSE_RECOVERY),
            opts.workers,
        )?)
    } else {
        None
    };
    let (cat, mnt, mss) = if opts.thresholds {
        let n = opts.probe_episodes;
        (
            Some(critical_angle(ctrl, base, n, seed, opts.workers)?),
            Some(threshold_search(
                ctrl,
                base,
                Axis::Noise,
                n,
                seed,
                opts.workers,
            )?),
            Some(threshold_search(
                ctrl,
                base,
                Axis::Speed,
                n,
                seed,
                opts.workers,
            )?),
        )
    } else {
        (None, None, None)
    };
    let cfg = scenario.env_config(base)?;
    let report = assemble(
        ctrl,
        scenario,
        &cfg,
        seed,
        &opts.preset,
        &traces,
        brt,
        cat,
        mnt,
        mss,
    )?;
    Ok((report, traces))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    ctrl: &ControllerSpec,
    scenario: &ScenarioSpec,
    cfg: &EnvConfig,
    seed: u64,
    preset: &str,
    traces: &[Trace],
    brt: Option<RecoveryStats>,
    cat: Option<CriticalAngle>,
    mnt: Option<Threshold>,
    mss: Option<Threshold>,
) -> Result<MetricsReport> {
    let bsr = balance_success_rate(traces)
        .ok_or_else(|| Error::Config("evaluation needs at least one episode".into()))?;
    let tracking = tracking_errors(traces);
    let latency = response_latency(traces);
    let steps: usize = traces.iter().map(Trace::control_steps).sum();
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        controller: ctrl.kind().to_string(),
        seed,
        episodes: traces.len(),
        preset: preset.into(),
        bsr,
        brt,
        mbd: max_balance_duration(traces),
        cat,
        ste: tracking.map(|t| t.ste),
        vte: tracking.map(|t| t.vte),
        tracking_samples: tracking.map_or(0, |t| t.samples),
        srl: latency.stats,
        srl_events: latency.events,
        srl_timeouts: latency.timeouts,
        mnt,
        mss,
        falls: traces.iter().filter(|t| t.fell).count(),
        mean_episode_steps: steps as f64 / traces.len() as f64,
        scenario_spec: scenario.clone(),
        config: serde_json::to_value(cfg)?,
    })
}

impl MetricsReport {
    /// Trace metrics recomputed from the given traces; the remaining fields
    /// are carried over.
    pub fn recompute(
        &self,
        traces: &[Trace],
        cfg: &EnvConfig,
        ctrl: &ControllerSpec,
    ) -> Result<Self> {
        assemble(
            ctrl,
            &self.scenario_spec,
            cfg,
            self.seed,
            &self.preset,
            traces,
            self.brt,
            self.cat.clone(),
            self.mnt.clone(),
            self.mss.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Flat row for the tables.
    pub fn summary(&self) -> SummaryRow {
        let brt = self.brt.and_then(|b| b.time);
        SummaryRow {
            scenario: self.scenario.clone(),
            controller: self.controller.clone(),
            episodes: self.episodes,
            bsr: self.bsr,
            brt_mean: brt.map(|b| b.mean),
            brt_std: brt.map(|b| b.std),
            mbd: self.mbd,
            cat: self.cat.as_ref().map(|c| c.value),
            ste: self.ste,
            vte: self.vte,
            srl_mean: self.srl.map(|s| s.mean),
            srl_std: self.srl.map(|s| s.std),
            mnt: self.mnt.as_ref().map(|t| t.value),
            mss: self.mss.as_ref().map(|t| t.value),
            falls: self.falls,
        }
    }
}

/// One CSV row of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub controller: String,
    pub episodes: usize,
    pub bsr: f64,
    pub brt_mean: Option<f64>,
    pub brt_std: Option<f64>,
    pub mbd: f64,
    pub cat: Option<f64>,
    pub ste: Option<f64>,
    pub vte: Option<f64>,
    pub srl_mean: Option<f64>,
    pub srl_std: Option<f64>,
    pub mnt: Option<f64>,
    pub mss: Option<f64>,
    pub falls: usize,
}

pub fn write_summary_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r.summary())?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready per-episode row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub control_steps: usize,
    pub fell: bool,
    pub balanced: bool,
    pub max_abs_phi: f64,
    pub longest_balance: f64,
    pub total_reward: f64,
    pub ste: Option<f64>,
    pub vte: Option<f64>,
}

pub fn episode_rows(traces: &[Trace]) -> Vec<EpisodeRow> {
    traces
        .iter()
        .map(|t| {
            let e = tracking_errors(std::slice::from_ref(t));
            EpisodeRow {
                episode: t.episode,
                control_steps: t.control_steps(),
                fell: t.fell,
                balanced: is_balanced(t),
                max_abs_phi: t.max_abs_phi(),
                longest_balance: longest_balance(t),
                total_reward: t.total_reward(),
                ste: e.map(|e| e.ste),
                vte: e.map(|e| e.vte),
            }
        })
        .collect()
}

pub fn write_episode_csv<W: Write>(traces: &[Trace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in episode_rows(traces) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reports of one controller across the robustness matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub controller: String,
    pub seed: u64,
    pub rows: Vec<MetricsReport>,
}

pub fn run_robustness(
    ctrl: &ControllerSpec,
    scenarios: &[ScenarioSpec],
    base: &EnvConfig,
    seed: u64,
    opts: &EvalOptions,
    mut on_row: impl FnMut(&MetricsReport),
) -> Result<RobustnessReport> {
    let cell_opts = EvalOptions {
        thresholds: false,
        ..opts.clone()
    };
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let (r, _) = evaluate(ctrl, s, base, seed, &cell_opts)?;
        on_row(&r);
        rows.push(r);
    }
    Ok(RobustnessReport {
        schema_version: REPORT_SCHEMA_VERSION,
        controller: ctrl.kind().to_string(),
        seed,
        rows,
    })
}
