//! Metric definitions as pure functions of traces.

use serde::{Deserialize, Serialize};

use super::trace::{Trace, TraceStep};

/// Roll bound defining a balanced episode, rad (strict).
pub const BALANCE_BOUND: f64 = 0.5;
/// Recovery band on |phi|, rad.
pub const RECOVERY_BAND: f64 = 0.1;
/// Time the recovery band must be held, s.
pub const RECOVERY_HOLD: f64 = 1.0;
/// Time after each command change excluded from tracking errors, s.
pub const SETTLING_WINDOW: f64 = 1.0;
/// Relative latency band around the new target.
pub const LATENCY_BAND: f64 = 0.1;
/// Latency band floors for near-zero targets.
pub const LATENCY_FLOOR_STEER: f64 = 0.5 * std::f64::consts::PI / 180.0;
pub const LATENCY_FLOOR_SPEED: f64 = 0.05;

/// Sample mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: xs.len(),
        })
    }
}

/// Percentage of episodes whose roll stays strictly inside the balance bound
/// on every row. `None` for an empty set.
pub fn balance_success_rate(traces: &[Trace]) -> Option<f64> {
    if traces.is_empty() {
        return None;
    }
    let ok = traces.iter().filter(|t| is_balanced(t)).count();
    Some(100.0 * ok as f64 / traces.len() as f64)
}

pub fn is_balanced(trace: &Trace) -> bool {
    trace.max_abs_phi() < BALANCE_BOUND
}

/// Longest contiguous stretch with |phi| inside the balance bound, s.
pub fn longest_balance(trace: &Trace) -> f64 {
    let mut best = 0.0f64;
    let mut start: Option<f64> = None;
    for s in &trace.steps {
        if s.phi.abs() < BALANCE_BOUND {
            let t0 = *start.get_or_insert(s.t);
            best = best.max(s.t - t0);
        } else {
            start = None;
        }
    }
    best
}

/// Maximum balance duration over a set of traces, s.
pub fn max_balance_duration(traces: &[Trace]) -> f64 {
    traces.iter().map(longest_balance).fold(0.0, f64::max)
}

/// Time from row `from` until |phi| enters the recovery band and stays there
/// for [`RECOVERY_HOLD`]. `None` if that never happens within the trace.
pub fn recovery_time(trace: &Trace, from: usize) -> Option<f64> {
    let steps = trace.steps.get(from..)?;
    let t_imp = steps.first()?.t;
    let mut entry: Option<f64> = None;
    for s in steps {
        if s.phi.abs() < RECOVERY_BAND {
            let t0 = *entry.get_or_insert(s.t);
            if s.t - t0 >= RECOVERY_HOLD - 1e-9 {
                return Some(t0 - t_imp);
            }
        } else {
            entry = None;
        }
    }
    None
}

/// Row mask that is true once [`SETTLING_WINDOW`] has elapsed since the
/// episode start or the latest change of either command.
pub fn settled_mask(steps: &[TraceStep]) -> Vec<bool> {
    let mut last_change = steps.first().map_or(0.0, |s| s.t);
    let mut prev: Option<&TraceStep> = None;
    steps
        .iter()
        .map(|s| {
            if let Some(p) = prev {
                if p.v_cmd != s.v_cmd || p.delta_cmd != s.delta_cmd {
                    last_change = s.t;
                }
            }
            prev = Some(s);
            s.t - last_change >= SETTLING_WINDOW - 1e-9
        })
        .collect()
}

/// Steady-state tracking errors pooled over all settled rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrors {
    /// RMS of `delta - delta_cmd`, deg.
    pub ste: f64,
    /// Mean of `|v - v_cmd|`, m/s.
    pub vte: f64,
    pub samples: usize,
}

/// `None` when no row survives the settling mask.
pub fn tracking_errors(traces: &[Trace]) -> Option<TrackingErrors> {
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut n = 0usize;
    for tr in traces {
        for (s, keep) in tr.steps.iter().zip(settled_mask(&tr.steps)) {
            if keep {
                sq += (s.delta - s.delta_cmd).powi(2);
                abs += (s.v - s.v_cmd).abs();
                n += 1;
            }
        }
    }
    (n > 0).then(|| TrackingErrors {
        ste: (sq / n as f64).sqrt().to_degrees(),
        vte: abs / n as f64,
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Steer,
    Speed,
}

/// One command change and how long the tracked quantity took to respond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEvent {
    pub channel: Channel,
    pub row: usize,
    /// `None` when the band was not entered before the next change of the
    /// same channel or the end of the episode.
    pub latency: Option<f64>,
}

fn band(target: f64, floor: f64) -> f64 {
    (LATENCY_BAND * target.abs()).max(floor)
}

/// Latency events of one trace. Command values at row 0 are not events.
pub fn latency_events(trace: &Trace) -> Vec<LatencyEvent> {
    let steps = &trace.steps;
    let mut events = Vec::new();
    for channel in [Channel::Steer, Channel::Speed] {
        let (cmd, val, floor): (fn(&TraceStep) -> f64, fn(&TraceStep) -> f64, f64) = match channel {
            Channel::Steer => (|s| s.delta_cmd, |s| s.delta, LATENCY_FLOOR_STEER),
            Channel::Speed => (|s| s.v_cmd, |s| s.v, LATENCY_FLOOR_SPEED),
        };
        let changes: Vec<usize> = (1..steps.len())
            .filter(|&k| cmd(&steps[k]) != cmd(&steps[k - 1]))
            .collect();
        for (i, &k) in changes.iter().enumerate() {
            let end = changes.get(i + 1).copied().unwrap_or(steps.len());
            let target = cmd(&steps[k]);
            let w = band(target, floor);
            let latency = steps[k..end]
                .iter()
                .find(|s| (val(s) - target).abs() <= w)
                .map(|s| s.t - steps[k].t);
            events.push(LatencyEvent {
                channel,
                row: k,
                latency,
            });
        }
    }
    events
}

/// Pooled response latency over both channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub stats: Option<MeanStd>,
    pub events: usize,
    pub timeouts: usize,
}

pub fn response_latency(traces: &[Trace]) -> Latency {
    let events: Vec<LatencyEvent> = traces.iter().flat_map(latency_events).collect();
    let hits: Vec<f64> = events.iter().filter_map(|e| e.latency).collect();
    Latency {
        stats: MeanStd::of(&hits),
        events: events.len(),
        timeouts: events.len() - hits.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(phis: &[f64], dt: f64) -> Trace {
        Trace {
            episode: 0,
            fell: false,
            steps: phis
                .iter()
                .enumerate()
                .map(|(k, &phi)| TraceStep {
                    t: k as f64 * dt,
                    phi,
                    ..TraceStep::default()
                })
                .collect(),
        }
    }

    #[test]
    fn bsr_definitional_cases() {
        let up = trace(&[0.0; 50], 0.02);
        let over = trace(&[0.0, 0.2, 0.5, 0.1], 0.02);
        assert_eq!(balance_success_rate(&[up.clone(), up.clone()]), Some(100.0));
        assert_eq!(balance_success_rate(&[up.clone(), over]), Some(50.0));
        assert_eq!(
            balance_success_rate(&[trace(&[0.4999, -0.4999], 0.02)]),
            Some(100.0)
        );
        assert_eq!(balance_success_rate(&[]), None);
    }

    #[test]
    fn brt_definitional_cases() {
        let calm = trace(&[0.01; 200], 0.02);
        assert_eq!(recovery_time(&calm, 0), Some(0.0));
        // Crosses into the band at t = 1.2 s and stays.
        let phis: Vec<f64> = (0..200).map(|k| if k < 60 { 0.3 } else { 0.05 }).collect();
        let tr = trace(&phis, 0.02);
        assert!((recovery_time(&tr, 0).unwrap() - 1.2).abs() < 1e-12);
        // Re-exits the band before the hold completes; the later entry counts.
        let mut phis = phis;
        phis[80] = 0.2;
        let tr = trace(&phis, 0.02);
        assert!((recovery_time(&tr, 0).unwrap() - 1.62).abs() < 1e-12);
        // Too short to confirm the hold.
        assert_eq!(recovery_time(&trace(&[0.0; 40], 0.02), 0), None);
    }

    #[test]
    fn longest_balance_spans_contiguous_rows() {
        let mut phis = vec![0.0; 101];
        phis[30] = 0.6;
        let tr = trace(&phis, 0.1);
        assert!((longest_balance(&tr) - 6.9).abs() < 1e-12);
        assert!((max_balance_duration(&[trace(&[0.0; 11], 0.1), tr]) - 6.9).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_gives_that_ste() {
        let mut tr = trace(&[0.0; 200], 0.02);
        for s in &mut tr.steps {
            s.delta_cmd = 0.05;
            s.delta = 0.05 + 2f64.to_radians();
            s.v_cmd = 3.0;
            s.v = 2.5;
        }
        let e = tracking_errors(&[tr]).unwrap();
        assert!((e.ste - 2.0).abs() < 1e-9);
        assert!((e.vte - 0.5).abs() < 1e-12);
        assert_eq!(e.samples, 150);
    }

    #[test]
    fn latency_inside_band_is_zero() {
        let mut tr = trace(&[0.0; 10], 0.02);
        for (k, s) in tr.steps.iter_mut().enumerate() {
            s.v_cmd = if k < 5 { 2.0 } else { 2.01 };
            s.v = 2.0;
        }
        let ev = latency_events(&tr);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].latency, Some(0.0));
    }

    #[test]
    fn missed_band_is_a_timeout() {
        let mut tr = trace(&[0.0; 10], 0.02);
        for (k, s) in tr.steps.iter_mut().enumerate() {
            s.delta_cmd = if k < 5 { 0.0 } else { 0.1 };
        }
        let l = response_latency(&[tr]);
        assert_eq!((l.events, l.timeouts), (1, 1));
        assert!(l.stats.is_none());
    }
}
