use serde::{Deserialize, Serialize};

use super::care::{solve_care, CareSolution, Mat};
use super::{ControlInput, Controller, ControllerKind, Targets, LOW_SPEED_GUARD};
use crate::dynamics::{equilibrium_roll, linearize, ActuatorModel, PhysicalParams};
use crate::env::{Action, Observation};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrConfig {
    /// Diagonal of the state weight over `[phi - phi_eq, phi_dot, delta - delta_cmd]`.
    pub q: [f64; 3],
    pub r: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Speed change that triggers a new Riccati solve, m/s.
    pub resolve_dv: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q: [20.0, 6.0, 3.5],
            r: 1.5,
            tol: 1e-9,
            max_iter: 50,
            resolve_dv: 0.1,
        }
    }
}

/// Linearized model and optimal gain at speed `v`.
pub fn lqr_gain(
    cfg: &LqrConfig,
    p: &PhysicalParams<f64>,
    act: &ActuatorModel<f64>,
    v: f64,
) -> Result<CareSolution> {
    let (a, b) = linearize(p, act, v);
    solve_care(
        &Mat::from_rows(a),
        &b,
        &Mat::diag(&cfg.q),
        cfg.r,
        cfg.tol,
        cfg.max_iter,
    )
}

/// Steering target from a gain: `delta_cmd + u`, `u = -K [phi - phi_eq, phi_dot, delta - delta_cmd]`.
pub fn lqr_control(x: &ControlInput, k: &[f64], p: &PhysicalParams<f64>) -> Targets {
    let phi_eq = equilibrium_roll(p, x.v_cmd, x.delta_cmd);
    let e = [x.phi - phi_eq, x.phi_dot, x.delta - x.delta_cmd];
    let u = -(k[0] * e[0] + k[1] * e[1] + k[2] * e[2]);
    Targets {
        delta_target: x.delta_cmd + u,
        v_target: x.v_cmd,
    }
}

/// LQR with a speed-keyed gain cache.
#[derive(Debug, Clone)]
pub struct LqrController {
    pub cfg: LqrConfig,
    pub model: PhysicalParams<f64>,
    pub actuator: ActuatorModel<f64>,
    cached: Option<(f64, Vec<f64>)>,
    /// Set when a Riccati solve failed and an older gain is in use.
    pub degraded: bool,
    last: Option<Action>,
}

impl LqrController {
    pub fn new(cfg: LqrConfig, model: PhysicalParams<f64>, actuator: ActuatorModel<f64>) -> Self {
        Self {
            cfg,
            model,
            actuator,
            cached: None,
            degraded: false,
            last: None,
        }
    }

    /// Current gain, re-solving when the speed moved by more than the threshold.
    pub fn gain(&mut self, v: f64) -> Option<&[f64]> {
        let stale = match &self.cached {
            Some((vc, _)) => (v - vc).abs() > self.cfg.resolve_dv,
            None => true,
        };
        if stale {
            match lqr_gain(&self.cfg, &self.model, &self.actuator, v) {
                Ok(sol) => {
                    self.cached = Some((v, sol.k));
                    self.degraded = false;
                }
                Err(_) => self.degraded = true,
            }
        }
        self.cached.as_ref().map(|(_, k)| k.as_slice())
    }
}

impl Controller for LqrController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Lqr
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
        let model = self.model;
        let Some(k) = self.gain(x.v.max(LOW_SPEED_GUARD)).map(|k| k.to_vec()) else {
            return self.last.unwrap_or_default();
        };
        let t = lqr_control(&x, &k, &model);
        let a = Action::from_targets(t.delta_target, t.v_target, &self.actuator);
        self.last = Some(a);
        a
    }
}
