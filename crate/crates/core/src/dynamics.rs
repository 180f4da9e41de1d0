//! Reduced-order bicycle model.
//!
//! Roll is an inverted pendulum driven by the centripetal reaction of the
//! steering angle; yaw and planar position follow the kinematic bicycle.
//! Steering and speed are first-order actuators. Disturbances enter the roll
//! rate as a Wiener increment and a compound Poisson jump, and a constant
//! slope bias enters the roll acceleration.
//!
//! Sign convention: a positive steering angle produces a negative roll
//! acceleration, i.e. steering toward a positive lean rights the vehicle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BikeState<T> {
    pub phi: T,
    pub phi_dot: T,
    pub delta: T,
    pub delta_dot: T,
    pub v: T,
    pub psi: T,
    pub x: T,
    pub y: T,
    pub t: T,
}

impl<T: Scalar> BikeState<T> {
    /// Upright, straight running at speed `v`.
    pub fn upright(v: T) -> Self {
        Self { v, ..Self::zero() }
    }

    pub fn zero() -> Self {
        let z = T::zero();
        Self {
            phi: z,
            phi_dot: z,
            delta: z,
            delta_dot: z,
            v: z,
            psi: z,
            x: z,
            y: z,
            t: z,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.phi,
            self.phi_dot,
            self.delta,
            self.delta_dot,
            self.v,
            self.psi,
            self.x,
            self.y,
            self.t,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    /// Reflection through the vehicle's symmetry plane.
    pub fn mirrored(&self) -> Self {
        Self {
            phi: -self.phi,
            phi_dot: -self.phi_dot,
            delta: -self.delta,
            delta_dot: -self.delta_dot,
            psi: -self.psi,
            y: -self.y,
            ..*self
        }
    }
}

/// Uncertain physical parameters of one bicycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams<T> {
    pub m_total: T,
    pub h_com: T,
    pub wheelbase: T,
    pub mu: T,
    pub actuator_gain: T,
    pub obs_noise_frac: T,
    pub g: T,
}

impl<T: Scalar> PhysicalParams<T> {
    /// Values of the reference hardware: 25 kg, CoM at 0.65 m, 1.1 m wheelbase.
    pub fn nominal() -> Self {
        Self {
            m_total: T::lit(25.0),
            h_com: T::lit(0.65),
            wheelbase: T::lit(1.1),
            mu: T::lit(0.8),
            actuator_gain: T::one(),
            obs_noise_frac: T::zero(),
            g: T::lit(9.81),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_total", self.m_total),
            ("h_com", self.h_com),
            ("wheelbase", self.wheelbase),
            ("mu", self.mu),
            ("actuator_gain", self.actuator_gain),
            ("g", self.g),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > T::zero()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if !(self.obs_noise_frac.is_finite() && self.obs_noise_frac >= T::zero()) {
            return Err(Error::InvalidParams(format!(
                "obs_noise_frac must be >= 0, got {}",
                self.obs_noise_frac
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for PhysicalParams<T> {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Stochastic and terrain disturbance channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig<T> {
    /// Roll-rate diffusion, rad/s per sqrt(s).
    pub diffusion_std: T,
    /// Poisson jump rate, events per second.
    pub jump_rate: T,
    /// Roll-rate jump standard deviation, rad/s per event.
    pub jump_std: T,
    pub slope_angle: T,
    pub diffusion_enabled: bool,
    pub jump_enabled: bool,
    pub slope_enabled: bool,
}

impl<T: Scalar> DisturbanceConfig<T> {
    pub fn none() -> Self {
        Self {
            diffusion_std: T::zero(),
            jump_rate: T::zero(),
            jump_std: T::zero(),
            slope_angle: T::zero(),
            diffusion_enabled: false,
            jump_enabled: false,
            slope_enabled: false,
        }
    }

    pub fn is_quiet(&self) -> bool {
        self.effective_diffusion() == T::zero()
            && self.effective_jump_rate() == T::zero()
            && self.effective_slope() == T::zero()
    }

    pub fn effective_diffusion(&self) -> T {
        if self.diffusion_enabled {
            self.diffusion_std
        } else {
            T::zero()
        }
    }

    pub fn effective_jump_rate(&self) -> T {
        if self.jump_enabled {
            self.jump_rate
        } else {
            T::zero()
        }
    }

    pub fn effective_slope(&self) -> T {
        if self.slope_enabled {
            self.slope_angle
        } else {
            T::zero()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("diffusion_std", self.diffusion_std),
            ("jump_rate", self.jump_rate),
            ("jump_std", self.jump_std),
        ] {
            if !(value.is_finite() && value >= T::zero()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be >= 0, got {value}"
                )));
            }
        }
        if !self.slope_angle.is_finite() {
            return Err(Error::InvalidParams("slope_angle must be finite".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for DisturbanceConfig<T> {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorCommand<T> {
    pub delta_target: T,
    pub v_target: T,
}

/// Steering servo and hub motor characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorModel<T> {
    /// Steering time constant, s.
    pub tau_steer: T,
    /// Steering slew limit, rad/s.
    pub steer_rate_limit: T,
    /// Speed time constant at the reference mass, s.
    pub tau_speed: T,
    pub delta_max: T,
    pub v_max: T,
    /// Mass at which `tau_speed` applies; heavier vehicles respond slower.
    pub reference_mass: T,
}

impl<T: Scalar> Default for ActuatorModel<T> {
    fn default() -> Self {
        Self {
            tau_steer: T::lit(0.05),
            steer_rate_limit: T::lit(7.0),
            tau_speed: T::lit(0.3),
            delta_max: T::lit(0.61),
            v_max: T::lit(6.0),
            reference_mass: T::lit(25.0),
        }
    }
}

impl<T: Scalar> ActuatorModel<T> {
    /// Clamps a command into the actuator envelope.
    pub fn clamp(&self, cmd: ActuatorCommand<T>) -> ActuatorCommand<T> {
        ActuatorCommand {
            delta_target: cmd.delta_target.max(-self.delta_max).min(self.delta_max),
            v_target: cmd.v_target.max(T::zero()).min(self.v_max),
        }
    }
}

/// Roll acceleration of the reduced model.
///
/// `(g/h) sin(phi) - clamp((v^2/(b h)) tan(delta) cos(phi), +-mu g/h) + (g/h) sin(slope)`
pub fn roll_acceleration<T: Scalar>(
    s: &BikeState<T>,
    p: &PhysicalParams<T>,
    dc: &DisturbanceConfig<T>,
) -> Result<T> {
    if !(s.delta.abs() < T::FRAC_PI_2()) {
        return Err(Error::SteeringDomain(s.delta.to_f64_lossy()));
    }
    Ok(roll_accel_unchecked(s, p, dc.effective_slope()))
}

#[inline]
fn roll_accel_unchecked<T: Scalar>(s: &BikeState<T>, p: &PhysicalParams<T>, slope: T) -> T {
    let g_over_h = p.g / p.h_com;
    let gravity = g_over_h * s.phi.sin();
    let limit = p.mu * g_over_h;
    let steer = (s.v * s.v / (p.wheelbase * p.h_com)) * s.delta.tan() * s.phi.cos();
    let steer = steer.max(-limit).min(limit);
    gravity - steer + g_over_h * slope.sin()
}

/// Planar rates `(psi_dot, x_dot, y_dot)`.
pub fn kinematics_rates<T: Scalar>(s: &BikeState<T>, p: &PhysicalParams<T>) -> (T, T, T) {
    let psi_dot = s.v / p.wheelbase * s.delta.tan();
    let (sin_psi, cos_psi) = s.psi.sin_cos();
    (psi_dot, s.v * cos_psi, s.v * sin_psi)
}

/// One explicit step of the steering and speed actuators.
///
/// Returns `(delta_next, delta_dot_next, v_next)`.
pub fn actuator_step<T: Scalar>(
    s: &BikeState<T>,
    cmd: &ActuatorCommand<T>,
    p: &PhysicalParams<T>,
    act: &ActuatorModel<T>,
    dt: T,
) -> (T, T, T) {
    let cmd = act.clamp(*cmd);
    let target = p.actuator_gain * cmd.delta_target;
    let rate = ((target - s.delta) / act.tau_steer)
        .max(-act.steer_rate_limit)
        .min(act.steer_rate_limit);
    let delta_next = (s.delta + rate * dt).max(-act.delta_max).min(act.delta_max);
    let delta_dot_next = (delta_next - s.delta) / dt;

    let tau_v = act.tau_speed * p.m_total / act.reference_mass;
    let alpha = (dt / tau_v).min(T::one());
    let v_next = (s.v + alpha * (cmd.v_target - s.v)).max(T::zero());
    (delta_next, delta_dot_next, v_next)
}

/// One Euler-Maruyama step of length `dt`.
///
/// The roll channel is integrated semi-implicitly (rate first, then angle).
/// Every call consumes exactly three variates from `rng` regardless of which
/// disturbance channels are enabled, so toggling a channel never shifts the
/// random stream of later steps.
pub fn integrate<T: Scalar, R: Rng + ?Sized>(
    s: &BikeState<T>,
    cmd: &ActuatorCommand<T>,
    p: &PhysicalParams<T>,
    dc: &DisturbanceConfig<T>,
    act: &ActuatorModel<T>,
    dt: T,
    rng: &mut R,
) -> BikeState<T> {
    debug_assert!(dt > T::zero() && dt <= T::lit(0.05));

    let diffusion_draw: f64 = rng.sample(StandardNormal);
    let jump_u: f64 = rng.random();
    let jump_draw: f64 = rng.sample(StandardNormal);

    let phi_ddot = roll_accel_unchecked(s, p, dc.effective_slope());
    let (psi_dot, x_dot, y_dot) = kinematics_rates(s, p);
    let (delta, delta_dot, v) = actuator_step(s, cmd, p, act, dt);

    let mut phi_dot = s.phi_dot + phi_ddot * dt;
    let sigma = dc.effective_diffusion();
    if sigma > T::zero() {
        phi_dot += sigma * dt.sqrt() * T::lit(diffusion_draw);
    }
    let lambda = dc.effective_jump_rate();
    if lambda > T::zero() && T::lit(jump_u) < lambda * dt {
        phi_dot += dc.jump_std * T::lit(jump_draw);
    }

    BikeState {
        phi: s.phi + phi_dot * dt,
        phi_dot,
        delta,
        delta_dot,
        v,
        psi: s.psi + psi_dot * dt,
        x: s.x + x_dot * dt,
        y: s.y + y_dot * dt,
        t: s.t + dt,
    }
}

/// Advances one control period split into `substeps` integration steps.
#[allow(clippy::too_many_arguments)]
pub fn step_control<T: Scalar, R: Rng + ?Sized>(
    s: &BikeState<T>,
    cmd: &ActuatorCommand<T>,
    p: &PhysicalParams<T>,
    dc: &DisturbanceConfig<T>,
    act: &ActuatorModel<T>,
    control_dt: T,
    substeps: usize,
    rng: &mut R,
) -> BikeState<T> {
    let k = substeps.max(1);
    let dt = control_dt / T::from_usize(k).expect("substep count");
    let mut state = *s;
    for _ in 0..k {
        state = integrate(&state, cmd, p, dc, act, dt, rng);
    }
    state
}

/// Linearization about upright straight running at speed `v`.
///
/// State `[phi, phi_dot, delta]`, input the steering set-point deviation.
pub fn linearize<T: Scalar>(
    p: &PhysicalParams<T>,
    act: &ActuatorModel<T>,
    v: T,
) -> ([[T; 3]; 3], [T; 3]) {
    let z = T::zero();
    let g_over_h = p.g / p.h_com;
    let coupling = v * v / (p.wheelbase * p.h_com);
    let inv_tau = T::one() / act.tau_steer;
    let a = [[z, T::one(), z], [g_over_h, z, -coupling], [z, z, -inv_tau]];
    let b = [z, z, inv_tau];
    (a, b)
}

/// Roll angle at which gravity balances the steady-turn centripetal moment.
pub fn equilibrium_roll<T: Scalar>(p: &PhysicalParams<T>, v: T, delta: T) -> T {
    (v * v * delta.tan() / (p.wheelbase * p.g)).atan()
}
