//! Episode execution, the recovery protocol and threshold bisection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{recovery_time, MeanStd, BALANCE_BOUND};
use super::scenario::ScenarioSpec;
use super::trace::{Trace, TraceStep};
use crate::baselines::{
    policy_actions, Controller, ControllerKind, LqrConfig, LqrController, PidConfig, PidController,
};
use crate::env::{Action, BikeEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::ActorCritic;
use crate::rng::derive_seed;

/// Success criterion of the threshold metrics, percent (strict).
pub const THRESHOLD_BSR: f64 = 95.0;
/// Lower bound on episodes per bisection probe.
pub const MIN_PROBE_EPISODES: usize = 100;
/// Roll impulse of the recovery protocol, rad.
pub const IMPULSE_ROLL: f64 = 0.35;
/// Steady running time before the impulse, s.
pub const IMPULSE_AFTER: f64 = 5.0;
/// Observation window after the impulse, s.
pub const RECOVERY_WINDOW: f64 = 10.0;

/// A controller description from which per-episode instances are built.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Policy(Arc<ActorCritic<f32>>),
    Pid(PidConfig),
    Lqr(LqrConfig),
}

impl ControllerSpec {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Policy(_) => ControllerKind::Policy,
            ControllerSpec::Pid(_) => ControllerKind::Pid,
            ControllerSpec::Lqr(_) => ControllerKind::Lqr,
        }
    }

    /// A fresh baseline instance; `None` for the batched policy.
    fn instance(&self, cfg: &EnvConfig) -> Option<Box<dyn Controller>> {
        match self {
            ControllerSpec::Policy(_) => None,
            ControllerSpec::Pid(c) => Some(Box::new(PidController::new(*c, cfg.actuator))),
            ControllerSpec::Lqr(c) => Some(Box::new(LqrController::new(
                c.clone(),
                cfg.base_params,
                cfg.actuator,
            ))),
        }
    }
}

/// Forces |phi| to `phi` right after row `row` is recorded. The sign
/// alternates with the episode index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impulse {
    pub row: usize,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeOptions {
    /// Keep full traces; otherwise only summaries are returned.
    pub record: bool,
    pub impulse: Option<Impulse>,
    /// Threads sharing the episodes; results do not depend on it.
    pub workers: usize,
    /// Override the speed channel with the commanded speed, so only steering
    /// is left to the controller.
    pub hold_speed: bool,
}

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub episode: u64,
    pub control_steps: usize,
    pub fell: bool,
    pub max_abs_phi: f64,
    pub total_reward: f64,
    pub trace: Option<Trace>,
}

impl EpisodeOutcome {
    pub fn balanced(&self) -> bool {
        self.max_abs_phi < BALANCE_BOUND
    }
}

/// Runs episodes `0..n` of `cfg`, episode `i` on stream `(seed, i)`, each
/// until termination or truncation.
pub fn run_episodes(
    ctrl: &ControllerSpec,
    cfg: &EnvConfig,
    n: usize,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<Vec<EpisodeOutcome>> {
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let workers = opts.workers.max(1).min(n.max(1));
    if workers == 1 {
        return run_range(ctrl, &cfg, 0..n as u64, seed, &opts);
    }
    let chunk = n.div_ceil(workers) as u64;
    let parts: Vec<Result<Vec<EpisodeOutcome>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as u64)
            .map(|w| {
                let range = (w * chunk).min(n as u64)..((w + 1) * chunk).min(n as u64);
                let cfg = &cfg;
                let opts = &opts;
                scope.spawn(move || run_range(ctrl, cfg, range, seed, opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn run_range(
    ctrl: &ControllerSpec,
    cfg: &Arc<EnvConfig>,
    range: std::ops::Range<u64>,
    seed: u64,
    opts: &EpisodeOptions,
) -> Result<Vec<EpisodeOutcome>> {
    struct Slot {
        env: BikeEnv,
        ctrl: Option<Box<dyn Controller>>,
        out: EpisodeOutcome,
        rows: Vec<TraceStep>,
        done: bool,
    }
    let mut slots: Vec<Slot> = range
        .map(|i| {
            let env = BikeEnv::new(cfg.clone(), seed, i);
            let first = TraceStep::new(
                &env.state,
                &env.commands,
                env.prev_action,
                0.0,
                &Default::default(),
            );
            Slot {
                ctrl: ctrl.instance(cfg),
                out: EpisodeOutcome {
                    episode: i,
                    control_steps: 0,
                    fell: false,
                    max_abs_phi: env.state.phi.abs(),
                    total_reward: 0.0,
                    trace: None,
                },
                rows: if opts.record { vec![first] } else { Vec::new() },
                env,
                done: false,
            }
        })
        .collect();

    let impulse = |slot: &mut Slot, row: usize| {
        if let Some(imp) = opts.impulse {
            if imp.row == row {
                let phi = if slot.out.episode % 2 == 0 {
                    imp.phi
                } else {
                    -imp.phi
                };
                slot.env.set_roll(phi);
                slot.out.max_abs_phi = slot.out.max_abs_phi.max(phi.abs());
                if let Some(r) = slot.rows.last_mut() {
                    r.phi = phi;
                }
            }
        }
    };
    for s in &mut slots {
        impulse(s, 0);
    }

    let mut active: Vec<usize> = (0..slots.len()).collect();
    while !active.is_empty() {
        let actions: Vec<Action> = match ctrl {
            ControllerSpec::Policy(p) => {
                let obs: Vec<_> = active.iter().map(|&i| slots[i].env.observation()).collect();
                policy_actions(p, &obs)
            }
            _ => active
                .iter()
                .map(|&i| {
                    let s = &mut slots[i];
                    let obs = s.env.observation();
                    s.ctrl.as_mut().expect("baseline instance").act(&obs)
                })
                .collect(),
        };
        for (&i, a) in active.iter().zip(&actions) {
            let s = &mut slots[i];
            let mut a = *a;
            if opts.hold_speed {
                a.0[1] = Action::from_targets(0.0, s.env.commands.v_cmd, &cfg.actuator).0[1];
            }
            let r = s.env.step(&a);
            if !(r.reward.is_finite() && s.env.state.is_finite()) {
                return Err(Error::TrainingFault(format!(
                    "non-finite state in evaluation episode {}",
                    s.out.episode
                )));
            }
            s.out.control_steps += 1;
            s.out.total_reward += r.reward;
            s.out.max_abs_phi = s.out.max_abs_phi.max(s.env.state.phi.abs());
            if opts.record {
                let terms = r.reward_terms.weighted(&cfg.reward.weights);
                let row = TraceStep::new(
                    &s.env.state,
                    &s.env.commands,
                    s.env.prev_action,
                    r.reward,
                    &terms,
                );
                s.rows.push(row);
            }
            if r.done() {
                s.out.fell = r.terminated;
                s.done = true;
            } else {
                let k = s.out.control_steps;
                impulse(s, k);
            }
        }
        active.retain(|&i| !slots[i].done);
    }

    Ok(slots
        .into_iter()
        .map(|s| {
            let mut out = s.out;
            if opts.record {
                out.trace = Some(Trace {
                    episode: out.episode,
                    steps: s.rows,
                    fell: out.fell,
                });
            }
            out
        })
        .collect())
}

/// Runs `scenario.episodes` recorded episodes of a scenario.
pub fn run_episode_batch(
    ctrl: &ControllerSpec,
    scenario: &ScenarioSpec,
    base: &EnvConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<Trace>> {
    let cfg = scenario.env_config(base)?;
    let opts = EpisodeOptions {
        record: true,
        workers,
        ..EpisodeOptions::default()
    };
    Ok(run_episodes(ctrl, &cfg, scenario.episodes, seed, opts)?
        .into_iter()
        .filter_map(|o| o.trace)
        .collect())
}

/// Balance success rate from episode summaries, percent.
pub fn outcome_bsr(outcomes: &[EpisodeOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let ok = outcomes.iter().filter(|o| o.balanced()).count();
    100.0 * ok as f64 / outcomes.len() as f64
}

/// Recovery-time statistics of the impulse protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Over recovered trials, s.
    pub time: Option<MeanStd>,
    pub trials: usize,
    /// Fell before the impulse.
    pub unsettled: usize,
    /// Fell or never held the recovery band after the impulse.
    pub unrecovered: usize,
}

/// Straight running at a held speed for [`IMPULSE_AFTER`], then the roll is
/// forced to [`IMPULSE_ROLL`] and the recovery time measured.
pub fn balance_recovery_time(
    ctrl: &ControllerSpec,
    scenario: &ScenarioSpec,
    base: &EnvConfig,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<RecoveryStats> {
    let spec = ScenarioSpec {
        delta_cmd_max_deg: 0.0,
        hold_commands: true,
        duration_s: IMPULSE_AFTER + RECOVERY_WINDOW,
        episodes: trials,
        ..scenario.clone()
    };
    let cfg = spec.env_config(base)?;
    let row = (IMPULSE_AFTER / cfg.control_dt).round() as usize;
    let opts = EpisodeOptions {
        record: true,
        impulse: Some(Impulse {
            row,
            phi: IMPULSE_ROLL,
        }),
        workers,
        ..EpisodeOptions::default()
    };
    let outcomes = run_episodes(ctrl, &cfg, trials, seed, opts)?;
    let mut times = Vec::new();
    let mut unsettled = 0;
    let mut unrecovered = 0;
    for o in &outcomes {
        let tr = o.trace.as_ref().expect("recorded");
        if tr.steps.len() <= row {
            unsettled += 1;
        } else if let Some(t) = recovery_time(tr, row) {
            times.push(t);
        } else {
            unrecovered += 1;
        }
    }
    Ok(RecoveryStats {
        time: MeanStd::of(&times),
        trials,
        unsettled,
        unrecovered,
    })
}

/// Axes of the threshold metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Observation noise fraction; the good end is 0.
    Noise,
    /// Straight-line speed held at the actuator, m/s; the good end is the top
    /// speed.
    Speed,
    /// Initial roll magnitude, deg; the good end is 0.
    Angle,
}

impl Axis {
    /// `(good end, bad end, resolution)`
    pub fn range(self) -> (f64, f64, f64) {
        match self {
            Axis::Noise => (0.0, 0.5, 0.01),
            Axis::Speed => (5.0, 0.0, 0.05),
            Axis::Angle => (0.0, 28.5, 0.25),
        }
    }

    fn purpose(self) -> u64 {
        match self {
            Axis::Noise => 11,
            Axis::Speed => 12,
            Axis::Angle => 13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: f64,
    pub bsr: f64,
}

/// Outcome of a bisection along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// Last probed value satisfying the criterion; the good end when none does.
    pub value: f64,
    /// The criterion holds across the whole axis.
    pub saturated: bool,
    /// The criterion fails even at the good end.
    pub infeasible: bool,
    pub resolution: f64,
    pub probes: Vec<Probe>,
}

/// Bisects between a good end and a bad end until they are within
/// `resolution`, assuming the criterion flips once along the axis.
pub fn bisect_threshold(
    good: f64,
    bad: f64,
    resolution: f64,
    mut bsr_at: impl FnMut(f64) -> Result<f64>,
) -> Result<Threshold> {
    let mut probes = Vec::new();
    let mut probe = |x: f64, probes: &mut Vec<Probe>| -> Result<bool> {
        let bsr = bsr_at(x)?;
        probes.push(Probe { x, bsr });
        Ok(bsr > THRESHOLD_BSR)
    };
    let mut t = Threshold {
        value: good,
        saturated: false,
        infeasible: false,
        resolution,
        probes: Vec::new(),
    };
    if !probe(good, &mut probes)? {
        t.infeasible = true;
    } else if probe(bad, &mut probes)? {
        t.saturated = true;
        t.value = bad;
    } else {
        let (mut g, mut b) = (good, bad);
        while (b - g).abs() > resolution {
            let m = 0.5 * (g + b);
            if probe(m, &mut probes)? {
                g = m;
            } else {
                b = m;
            }
        }
        t.value = g;
    }
    t.probes = probes;
    Ok(t)
}

/// Scenario realizing a point `x` on an axis.
pub fn axis_scenario(axis: Axis, x: f64, episodes: usize) -> ScenarioSpec {
    let base = ScenarioSpec::nominal().with_episodes(episodes);
    match axis {
        Axis::Noise => ScenarioSpec {
            name: format!("noise_{x}"),
            noise: x,
            ..base
        },
        Axis::Speed => ScenarioSpec {
            name: format!("speed_{x}"),
            v_band: [x, x],
            delta_cmd_max_deg: 0.0,
            hold_commands: true,
            ..base
        },
        Axis::Angle => ScenarioSpec {
            name: format!("angle_{x}"),
            phi_init_deg: [x, x],
            ..base
        },
    }
}

/// BSR of the scenario at a point of an axis; probes share one seed so the
/// curve along the axis uses common random numbers.
pub fn axis_bsr(
    ctrl: &ControllerSpec,
    base: &EnvConfig,
    axis: Axis,
    x: f64,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<f64> {
    let cfg = axis_scenario(axis, x, episodes).env_config(base)?;
    let opts = EpisodeOptions {
        workers,
        hold_speed: axis == Axis::Speed,
        ..EpisodeOptions::default()
    };
    Ok(outcome_bsr(&run_episodes(
        ctrl, &cfg, episodes, seed, opts,
    )?))
}

/// Threshold metric along `axis`. Angle searches run on the positive side
/// with the mirror image obtained by negating the start.
pub fn threshold_search(
    ctrl: &ControllerSpec,
    base: &EnvConfig,
    axis: Axis,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<Threshold> {
    if episodes < MIN_PROBE_EPISODES {
        return Err(Error::Config(format!(
            "threshold probes need at least {MIN_PROBE_EPISODES} episodes, got {episodes}"
        )));
    }
    let (good, bad, res) = axis.range();
    let seed = derive_seed(seed, axis.purpose());
    bisect_threshold(good, bad, res, |x| {
        axis_bsr(ctrl, base, axis, x, episodes, seed, workers)
    })
}

/// Critical angle: the smaller of the two one-sided thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalAngle {
    /// deg
    pub value: f64,
    pub saturated: bool,
    pub infeasible: bool,
    pub positive: Threshold,
    pub negative: Threshold,
}

pub fn critical_angle(
    ctrl: &ControllerSpec,
    base: &EnvConfig,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<CriticalAngle> {
    if episodes < MIN_PROBE_EPISODES {
        return Err(Error::Config(format!(
            "threshold probes need at least {MIN_PROBE_EPISODES} episodes, got {episodes}"
        )));
    }
    let (good, bad, res) = Axis::Angle.range();
    let seed = derive_seed(seed, Axis::Angle.purpose());
    let side = |sign: f64| {
        bisect_threshold(good, bad, res, |x| {
            axis_bsr(ctrl, base, Axis::Angle, sign * x, episodes, seed, workers)
        })
    };
    let positive = side(1.0)?;
    let negative = side(-1.0)?;
    Ok(CriticalAngle {
        value: positive.value.min(negative.value),
        saturated: positive.saturated && negative.saturated,
        infeasible: positive.infeasible || negative.infeasible,
        positive,
        negative,
    })
}
