use serde::{Deserialize, Serialize};

use super::{ControlInput, Controller, ControllerKind, Targets, LOW_SPEED_GUARD};
use crate::dynamics::ActuatorModel;
use crate::env::{Action, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    pub kp_base: f64,
    pub kd_base: f64,
    /// Speed at which the base gains apply, m/s.
    pub v_ref: f64,
    /// Outer loop: roll reference per radian of heading error.
    pub k_psi: f64,
    /// Roll reference limit, rad.
    pub phi_ref_limit: f64,
    /// Adds `delta_cmd` to the steering target.
    pub delta_cmd_feedforward: bool,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            kp_base: 4.0,
            kd_base: 0.4,
            v_ref: 2.0,
            k_psi: 0.05,
            phi_ref_limit: 0.15,
            delta_cmd_feedforward: false,
        }
    }
}

impl PidConfig {
    /// `(K_p(v), K_d(v))` with `K ∝ v^-2`, speed floored at the guard.
    pub fn gains(&self, v: f64) -> (f64, f64) {
        let s = (self.v_ref / v.max(LOW_SPEED_GUARD)).powi(2);
        (self.kp_base * s, self.kd_base * s)
    }
}

/// Dual-loop law: heading error sets a roll reference, roll PD sets steering.
pub fn pid_control(x: &ControlInput, cfg: &PidConfig) -> Targets {
    let lim = cfg.phi_ref_limit;
    let phi_ref = (cfg.k_psi * x.heading_error).clamp(-lim, lim);
    let (kp, kd) = cfg.gains(x.v);
    let mut delta_target = kp * (x.phi - phi_ref) + kd * x.phi_dot;
    if cfg.delta_cmd_feedforward {
        delta_target += x.delta_cmd;
    }
    Targets {
        delta_target,
        v_target: x.v_cmd,
    }
}

#[derive(Debug, Clone)]
pub struct PidController {
    pub cfg: PidConfig,
    pub actuator: ActuatorModel<f64>,
    last: Option<Action>,
}

impl PidController {
    pub fn new(cfg: PidConfig, actuator: ActuatorModel<f64>) -> Self {
        Self {
            cfg,
            actuator,
            last: None,
        }
    }
}

impl Controller for PidController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Pid
    }

    fn reset(&mut self) {
        self.last = None;
    }

    fn act(&mut self, obs: &Observation) -> Action {
        let x = ControlInput::from_observation(obs);
        if x.v < LOW_SPEED_GUARD {
            if let Some(a) = self.last {
                return a;
            }
        }
        let t = pid_control(&x, &self.cfg);
        let a = Action::from_targets(t.delta_target, t.v_target, &self.actuator);
        self.last = Some(a);
        a
    }
}
