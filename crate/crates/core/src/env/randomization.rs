//! Domain randomization over physical parameters, initial states, commands
//! and terrain, grouped so each group can be toggled on its own.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BikeState, DisturbanceConfig, PhysicalParams};
use crate::error::{Error, Result};

/// A uniformly distributed variable with a nominal fallback value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVar {
    pub lo: f64,
    pub hi: f64,
    pub nominal: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl RandomVar {
    pub const fn uniform(lo: f64, hi: f64, nominal: f64) -> Self {
        Self {
            lo,
            hi,
            nominal,
            enabled: true,
        }
    }

    /// Draws one variate. The uniform draw is consumed even when the variable
    /// or its group is disabled so that other variables see the same stream.
    pub fn sample<R: Rng + ?Sized>(&self, group_enabled: bool, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if group_enabled && self.enabled {
            self.lo + u * (self.hi - self.lo)
        } else {
            self.nominal
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.nominal.is_finite()) {
            return Err(Error::InvalidSpec(format!("{name}: non-finite bound")));
        }
        if self.lo > self.hi {
            return Err(Error::InvalidSpec(format!(
                "{name}: min {} > max {}",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsGroup {
    pub enabled: bool,
    /// kg
    pub m_total: RandomVar,
    /// m
    pub h_com: RandomVar,
    pub mu: RandomVar,
    pub actuator_gain: RandomVar,
    /// Observation noise as a fraction of each channel's maximum magnitude.
    pub obs_noise_frac: RandomVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGroup {
    pub enabled: bool,
    /// m/s
    pub v_init: RandomVar,
    pub phi_init_deg: RandomVar,
    pub servo_deg: RandomVar,
    /// Hub motor angular velocity at engagement, rad/s.
    pub hub_omega: RandomVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGroup {
    pub enabled: bool,
    /// m/s
    pub v_cmd: RandomVar,
    pub delta_cmd_deg: RandomVar,
    /// Seconds between command resamples.
    pub resample_interval: RandomVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainGroup {
    pub enabled: bool,
    pub diffusion_std: RandomVar,
    /// rad
    pub slope_angle: RandomVar,
    pub jump_rate: RandomVar,
    /// Fixed per-event magnitude of the step disturbance, rad/s.
    pub jump_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSpec {
    pub dynamics: DynamicsGroup,
    pub initial: InitialGroup,
    pub task: TaskGroup,
    pub terrain: TerrainGroup,
}

/// Effective radius converting hub angular velocity into a speed set-point.
pub const HUB_WHEEL_RADIUS: f64 = 0.33;

impl RandomizationSpec {
    /// Dynamics, initial-state and task groups at their full ranges; terrain
    /// is available but off.
    pub fn full() -> Self {
        let nominal = PhysicalParams::<f64>::nominal();
        Self {
            dynamics: DynamicsGroup {
                enabled: true,
                m_total: RandomVar::uniform(15.0, 45.0, nominal.m_total),
                h_com: RandomVar::uniform(0.50, 0.80, nominal.h_com),
                mu: RandomVar::uniform(0.5, 1.2, nominal.mu),
                actuator_gain: RandomVar::uniform(0.9, 1.1, nominal.actuator_gain),
                obs_noise_frac: RandomVar::uniform(0.01, 0.20, 0.0),
            },
            initial: InitialGroup {
                enabled: true,
                v_init: RandomVar::uniform(1.0, 2.5, 2.0),
                phi_init_deg: RandomVar::uniform(-10.0, 10.0, 0.0),
                servo_deg: RandomVar::uniform(-20.0, 20.0, 0.0),
                hub_omega: RandomVar::uniform(0.0, 3.0, 2.0 / HUB_WHEEL_RADIUS),
            },
            task: TaskGroup {
                enabled: true,
                v_cmd: RandomVar::uniform(1.0, 5.0, 2.0),
                delta_cmd_deg: RandomVar::uniform(-10.0, 10.0, 0.0),
                resample_interval: RandomVar::uniform(3.0, 5.0, 4.0),
            },
            terrain: TerrainGroup {
                enabled: false,
                diffusion_std: RandomVar::uniform(0.0, 0.25, 0.0),
                slope_angle: RandomVar::uniform(-0.087, 0.087, 0.0),
                jump_rate: RandomVar::uniform(0.0, 0.5, 0.0),
                jump_std: 0.3,
            },
        }
    }

    /// Every group off: nominal parameters, upright start, fixed commands.
    pub fn none() -> Self {
        let mut spec = Self::full();
        spec.set_groups(false, false, false, false);
        spec
    }

    pub fn set_groups(&mut self, dynamics: bool, initial: bool, task: bool, terrain: bool) {
        self.dynamics.enabled = dynamics;
        self.initial.enabled = initial;
        self.task.enabled = task;
        self.terrain.enabled = terrain;
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        let i = &self.initial;
        let t = &self.task;
        let r = &self.terrain;
        for (name, var) in [
            ("dynamics.m_total", &d.m_total),
            ("dynamics.h_com", &d.h_com),
            ("dynamics.mu", &d.mu),
            ("dynamics.actuator_gain", &d.actuator_gain),
            ("dynamics.obs_noise_frac", &d.obs_noise_frac),
            ("initial.v_init", &i.v_init),
            ("initial.phi_init_deg", &i.phi_init_deg),
            ("initial.servo_deg", &i.servo_deg),
            ("initial.hub_omega", &i.hub_omega),
            ("task.v_cmd", &t.v_cmd),
            ("task.delta_cmd_deg", &t.delta_cmd_deg),
            ("task.resample_interval", &t.resample_interval),
            ("terrain.diffusion_std", &r.diffusion_std),
            ("terrain.slope_angle", &r.slope_angle),
            ("terrain.jump_rate", &r.jump_rate),
        ] {
            var.validate(name)?;
        }
        if d.m_total.lo <= 0.0 || d.h_com.lo <= 0.0 || d.mu.lo <= 0.0 || d.actuator_gain.lo <= 0.0 {
            return Err(Error::InvalidSpec(
                "physical parameters must be positive".into(),
            ));
        }
        if d.obs_noise_frac.lo < 0.0 || d.obs_noise_frac.hi > 0.5 {
            return Err(Error::InvalidSpec(
                "obs_noise_frac must lie in [0, 0.5]".into(),
            ));
        }
        if t.resample_interval.lo <= 0.0 {
            return Err(Error::InvalidSpec(
                "resample interval must be positive".into(),
            ));
        }
        if r.diffusion_std.lo < 0.0 || r.jump_rate.lo < 0.0 || r.jump_std < 0.0 {
            return Err(Error::InvalidSpec("terrain magnitudes must be >= 0".into()));
        }
        Ok(())
    }

    /// Draws the physical parameters. Wheelbase and gravity are never randomized.
    pub fn sample_params<R: Rng + ?Sized>(
        &self,
        base: &PhysicalParams<f64>,
        rng: &mut R,
    ) -> PhysicalParams<f64> {
        let d = &self.dynamics;
        let on = d.enabled;
        PhysicalParams {
            m_total: d.m_total.sample(on, rng),
            h_com: d.h_com.sample(on, rng),
            mu: d.mu.sample(on, rng),
            actuator_gain: d.actuator_gain.sample(on, rng),
            obs_noise_frac: d.obs_noise_frac.sample(on, rng),
            ..*base
        }
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> InitialSample {
        let i = &self.initial;
        let on = i.enabled;
        InitialSample {
            v: i.v_init.sample(on, rng),
            phi: i.phi_init_deg.sample(on, rng).to_radians(),
            delta: i.servo_deg.sample(on, rng).to_radians(),
            hub_omega: i.hub_omega.sample(on, rng),
        }
    }

    /// `(v_cmd, delta_cmd rad, interval s)`
    pub fn sample_command<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        let t = &self.task;
        let on = t.enabled;
        (
            t.v_cmd.sample(on, rng),
            t.delta_cmd_deg.sample(on, rng).to_radians(),
            t.resample_interval.sample(on, rng),
        )
    }

    /// Terrain disturbances layered on top of `base`.
    pub fn sample_terrain<R: Rng + ?Sized>(
        &self,
        base: &DisturbanceConfig<f64>,
        rng: &mut R,
    ) -> DisturbanceConfig<f64> {
        let r = &self.terrain;
        let on = r.enabled;
        let diffusion = r.diffusion_std.sample(on, rng);
        let slope = r.slope_angle.sample(on, rng);
        let jump_rate = r.jump_rate.sample(on, rng);
        if !on {
            return *base;
        }
        DisturbanceConfig {
            diffusion_std: diffusion,
            jump_rate,
            jump_std: r.jump_std,
            slope_angle: slope,
            diffusion_enabled: true,
            jump_enabled: true,
            slope_enabled: true,
        }
    }
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self::full()
    }
}

/// Initial kinematic state drawn at reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSample {
    pub v: f64,
    pub phi: f64,
    pub delta: f64,
    pub hub_omega: f64,
}

impl InitialSample {
    pub fn state(&self) -> BikeState<f64> {
        BikeState {
            phi: self.phi,
            delta: self.delta,
            ..BikeState::upright(self.v)
        }
    }
}
