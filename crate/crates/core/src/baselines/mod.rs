//! Classical comparators sharing the policy's action interface.

pub mod care;
pub mod lqr;
pub mod pid;

use serde::{Deserialize, Serialize};

use crate::dynamics::BikeState;
use crate::env::command::CommandState;
use crate::env::{Action, Observation};
use crate::nn::ActorCritic;

pub use lqr::{LqrConfig, LqrController};
pub use pid::{PidConfig, PidController};

/// Below this speed both baselines hold their previous output.
pub const LOW_SPEED_GUARD: f64 = 0.3;

/// Signals a controller may read.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub phi: f64,
    pub phi_dot: f64,
    pub delta: f64,
    pub v: f64,
    pub heading_error: f64,
    pub v_cmd: f64,
    pub delta_cmd: f64,
}

impl ControlInput {
    pub fn from_observation(o: &Observation) -> Self {
        Self {
            phi: o.phi(),
            phi_dot: o.phi_dot(),
            delta: o.delta(),
            v: o.v(),
            heading_error: o.heading_error(),
            v_cmd: o.v_cmd(),
            delta_cmd: o.delta_cmd(),
        }
    }

    pub fn from_state(s: &BikeState<f64>, c: &CommandState) -> Self {
        Self {
            phi: s.phi,
            phi_dot: s.phi_dot,
            delta: s.delta,
            v: s.v,
            heading_error: c.heading_error(s.psi),
            v_cmd: c.v_cmd,
            delta_cmd: c.delta_cmd,
        }
    }

    pub fn mirrored(&self) -> Self {
        Self {
            phi: -self.phi,
            phi_dot: -self.phi_dot,
            delta: -self.delta,
            heading_error: -self.heading_error,
            delta_cmd: -self.delta_cmd,
            ..*self
        }
    }
}

/// Actuator set-points before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Targets {
    pub delta_target: f64,
    pub v_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Policy,
    Pid,
    Lqr,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Policy => "policy",
            ControllerKind::Pid => "pid",
            ControllerKind::Lqr => "lqr",
        })
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "policy" => Ok(Self::Policy),
            "pid" => Ok(Self::Pid),
            "lqr" => Ok(Self::Lqr),
            other => Err(format!("unknown controller '{other}' (policy, pid, lqr)")),
        }
    }
}

/// Anything that maps observations to actions, one instance per environment.
pub trait Controller: Send {
    fn kind(&self) -> ControllerKind;
    /// Clears per-episode memory.
    fn reset(&mut self);
    fn act(&mut self, obs: &Observation) -> Action;
}

/// The learned policy acting deterministically (mean action).
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub policy: std::sync::Arc<ActorCritic<f32>>,
}

impl Controller for PolicyController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Policy
    }

    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation) -> Action {
        self.policy
            .act_deterministic(std::slice::from_ref(obs))
            .map(|a| a[0])
            .unwrap_or_default()
    }
}

/// Batched deterministic policy actions; many environments in one forward pass.
pub fn policy_actions(policy: &ActorCritic<f32>, obs: &[Observation]) -> Vec<Action> {
    policy
        .act_deterministic(obs)
        .unwrap_or_else(|_| vec![Action::default(); obs.len()])
}
