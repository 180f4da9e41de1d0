//! Per-step episode records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::BikeState;
use crate::env::command::CommandState;
use crate::env::reward::RewardTerms;
use crate::error::{Error, Result};

/// One row: the state after a control step together with the commands in
/// force and the action that produced it. Row 0 holds the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub delta: f64,
    pub delta_dot: f64,
    pub v: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    pub v_cmd: f64,
    pub delta_cmd: f64,
    pub psi_ref: f64,
    pub action_steer: f64,
    pub action_speed: f64,
    pub reward: f64,
    /// Weighted reward components.
    pub r_surv: f64,
    pub r_vel: f64,
    pub r_steer: f64,
    pub r_act: f64,
    pub r_rate: f64,
}

impl TraceStep {
    /// `terms` are the weighted reward components.
    pub fn new(
        s: &BikeState<f64>,
        c: &CommandState,
        action: [f64; 2],
        reward: f64,
        terms: &RewardTerms,
    ) -> Self {
        Self {
            t: s.t,
            phi: s.phi,
            phi_dot: s.phi_dot,
            delta: s.delta,
            delta_dot: s.delta_dot,
            v: s.v,
            psi: s.psi,
            x: s.x,
            y: s.y,
            v_cmd: c.v_cmd,
            delta_cmd: c.delta_cmd,
            psi_ref: c.psi_desired,
            action_steer: action[0],
            action_speed: action[1],
            reward,
            r_surv: terms.surv,
            r_vel: terms.vel,
            r_steer: terms.steer,
            r_act: terms.act,
            r_rate: terms.rate,
        }
    }

    pub fn terms(&self) -> RewardTerms {
        RewardTerms {
            surv: self.r_surv,
            vel: self.r_vel,
            steer: self.r_steer,
            act: self.r_act,
            rate: self.r_rate,
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.t,
            self.phi,
            self.phi_dot,
            self.delta,
            self.delta_dot,
            self.v,
            self.psi,
            self.x,
            self.y,
            self.v_cmd,
            self.delta_cmd,
            self.psi_ref,
            self.action_steer,
            self.action_speed,
            self.reward,
            self.r_surv,
            self.r_vel,
            self.r_steer,
            self.r_act,
            self.r_rate,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// A complete episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub episode: u64,
    pub steps: Vec<TraceStep>,
    /// Ended on the safety roll bound.
    pub fell: bool,
}

impl Trace {
    /// Number of control steps taken (rows minus the initial row).
    pub fn control_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.phi.abs()))
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    episode: u64,
    step: u64,
    fell: u8,
    t: f64,
    phi: f64,
    phi_dot: f64,
    delta: f64,
    delta_dot: f64,
    v: f64,
    psi: f64,
    x: f64,
    y: f64,
    v_cmd: f64,
    delta_cmd: f64,
    psi_ref: f64,
    action_steer: f64,
    action_speed: f64,
    reward: f64,
    r_surv: f64,
    r_vel: f64,
    r_steer: f64,
    r_act: f64,
    r_rate: f64,
}

impl CsvRow {
    fn new(episode: u64, step: u64, fell: bool, s: &TraceStep) -> Self {
        Self {
            episode,
            step,
            fell: fell as u8,
            t: s.t,
            phi: s.phi,
            phi_dot: s.phi_dot,
            delta: s.delta,
            delta_dot: s.delta_dot,
            v: s.v,
            psi: s.psi,
            x: s.x,
            y: s.y,
            v_cmd: s.v_cmd,
            delta_cmd: s.delta_cmd,
            psi_ref: s.psi_ref,
            action_steer: s.action_steer,
            action_speed: s.action_speed,
            reward: s.reward,
            r_surv: s.r_surv,
            r_vel: s.r_vel,
            r_steer: s.r_steer,
            r_act: s.r_act,
            r_rate: s.r_rate,
        }
    }

    fn step(&self) -> TraceStep {
        TraceStep {
            t: self.t,
            phi: self.phi,
            phi_dot: self.phi_dot,
            delta: self.delta,
            delta_dot: self.delta_dot,
            v: self.v,
            psi: self.psi,
            x: self.x,
            y: self.y,
            v_cmd: self.v_cmd,
            delta_cmd: self.delta_cmd,
            psi_ref: self.psi_ref,
            action_steer: self.action_steer,
            action_speed: self.action_speed,
            reward: self.reward,
            r_surv: self.r_surv,
            r_vel: self.r_vel,
            r_steer: self.r_steer,
            r_act: self.r_act,
            r_rate: self.r_rate,
        }
    }
}

/// Writes traces as one CSV table keyed by `(episode, step)`.
pub fn write_traces<W: Write>(traces: &[Trace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for tr in traces {
        for (k, s) in tr.steps.iter().enumerate() {
            w.serialize(CsvRow::new(tr.episode, k as u64, tr.fell, s))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads traces written by [`write_traces`]. Rows must be complete, finite,
/// numbered from 0 within each episode and strictly increasing in time.
pub fn read_traces<R: Read>(input: R) -> Result<Vec<Trace>> {
    let mut r = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = r.headers()?.clone();
    let mut traces: Vec<Trace> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row: CsvRow = rec.deserialize(Some(&headers))?;
        let step = row.step();
        let at = line + 2;
        if !step.is_finite() {
            return Err(Error::Trace(format!("line {at}: non-finite value")));
        }
        let start = traces.last().is_none_or(|t| t.episode != row.episode);
        if start {
            if row.step != 0 {
                return Err(Error::Trace(format!(
                    "line {at}: episode must start at step 0"
                )));
            }
            traces.push(Trace {
                episode: row.episode,
                steps: vec![step],
                fell: row.fell != 0,
            });
            continue;
        }
        let tr = traces.last_mut().expect("episode started above");
        if row.step != tr.steps.len() as u64 {
            return Err(Error::Trace(format!(
                "line {at}: step {} out of sequence",
                row.step
            )));
        }
        if step.t <= tr.steps[tr.steps.len() - 1].t {
            return Err(Error::Trace(format!("line {at}: time not increasing")));
        }
        tr.steps.push(step);
    }
    Ok(traces)
}

pub fn save_traces(path: &Path, traces: &[Trace]) -> Result<()> {
    write_traces(
        traces,
        std::io::BufWriter::new(std::fs::File::create(path)?),
    )
}

pub fn load_traces(path: &Path) -> Result<Vec<Trace>> {
    read_traces(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Trace> {
        (0..3)
            .map(|e| Trace {
                episode: e,
                fell: e == 1,
                steps: (0..5)
                    .map(|k| TraceStep {
                        t: k as f64 * 0.02,
                        phi: 0.01 * k as f64 - 0.1 * e as f64,
                        v: 2.0 + 1e-17 * k as f64,
                        delta_cmd: 0.1f64.sqrt(),
                        ..TraceStep::default()
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut buf = Vec::new();
        write_traces(&sample(), &mut buf).unwrap();
        assert_eq!(read_traces(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn truncated_row_is_rejected() {
        let mut buf = Vec::new();
        write_traces(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = text.trim_end().rfind(',').unwrap();
        assert!(read_traces(text[..cut].as_bytes()).is_err());
    }

    #[test]
    fn out_of_order_rows_are_rejected() {
        let mut traces = sample();
        traces[0].steps.swap(1, 2);
        let mut buf = Vec::new();
        write_traces(&traces, &mut buf).unwrap();
        assert!(matches!(read_traces(buf.as_slice()), Err(Error::Trace(_))));
    }
}
