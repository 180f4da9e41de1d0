//! Turns recorded traces into the same state messages the live service sends.

use std::io::Write;
use std::time::Duration;

use bikelab_core::eval::Trace;

use crate::wire::{EventKind, ServerMsg, StateMsg, WireTerms};

/// One message and its offset from the start of the replay at 1x speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub at: f64,
    pub msg: ServerMsg,
}

impl Frame {
    /// Wall-clock offset at `speed`; `None` when unpaced (`speed` infinite).
    pub fn delay(&self, speed: f64) -> Option<Duration> {
        speed
            .is_finite()
            .then(|| Duration::from_secs_f64((self.at / speed).max(0.0)))
    }
}

/// Every `stride`-th row of each trace plus its last row, followed by a fall
/// or timeout event. Episodes play back to back.
pub fn frames(traces: &[Trace], controller: &str, stride: usize) -> Vec<Frame> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut offset = 0.0;
    for tr in traces {
        let last = tr.steps.len().saturating_sub(1);
        for (k, s) in tr.steps.iter().enumerate() {
            if k % stride != 0 && k != last {
                continue;
            }
            out.push(Frame {
                at: offset + s.t,
                msg: ServerMsg::State(StateMsg {
                    t: s.t,
                    phi: s.phi,
                    phi_dot: s.phi_dot,
                    delta: s.delta,
                    v: s.v,
                    psi: s.psi,
                    x: s.x,
                    y: s.y,
                    reward_terms: WireTerms::from(s.terms()),
                    controller: controller.to_string(),
                    v_cmd: s.v_cmd,
                    delta_cmd_deg: s.delta_cmd.to_degrees(),
                    episode: tr.episode,
                    paused: false,
                }),
            });
        }
        offset += tr.duration();
        out.push(Frame {
            at: offset,
            msg: ServerMsg::event(if tr.fell {
                EventKind::Fall
            } else {
                EventKind::Timeout
            }),
        });
    }
    out
}

/// Writes frames as JSON lines, paced at `speed`.
pub fn to_writer<W: Write>(frames: &[Frame], speed: f64, mut out: W) -> std::io::Result<()> {
    let start = std::time::Instant::now();
    for f in frames {
        if let Some(d) = f.delay(speed) {
            let due = start + d;
            let now = std::time::Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        writeln!(out, "{}", f.msg.to_json())?;
        out.flush()?;
    }
    Ok(())
}
