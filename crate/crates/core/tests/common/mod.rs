//! Independent oracles shared by the integration tests and the acceptance
//! report. Each check returns a one-line detail on success and the reason on
//! failure.

#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_4, LN_10, PI, SQRT_2};
use std::sync::Arc;

use bikelab_core::baselines::care::{care_residual, solve_care, spectral_abscissa, Mat};
use bikelab_core::baselines::lqr::lqr_gain;
use bikelab_core::baselines::{Controller, LqrConfig, LqrController, PidConfig, PidController};
use bikelab_core::dynamics::{
    integrate, linearize, step_control, ActuatorCommand, ActuatorModel, BikeState,
    DisturbanceConfig, PhysicalParams,
};
use bikelab_core::env::command::CommandState;
use bikelab_core::env::randomization::{RandomVar, RandomizationSpec, HUB_WHEEL_RADIUS};
use bikelab_core::env::reward::{compute_reward, reward_bounds, RewardConfig};
use bikelab_core::env::{
    check_termination, reset_sample, BikeEnv, EnvConfig, EpisodeStart, Observation, OBS_DIM,
};
use bikelab_core::eval::metrics::{
    balance_success_rate, recovery_time, response_latency, tracking_errors,
};
use bikelab_core::eval::{Trace, TraceStep};
use bikelab_core::nn::{gaussian_log_prob, ActorCritic, Mlp, Topology};
use bikelab_core::ppo::{clipped_surrogate, compute_gae, ppo_loss, GaeInput, LossCoefficients, SampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const DT: f64 = 0.02;

fn hold(v: f64) -> ActuatorCommand<f64> {
    ActuatorCommand {
        delta_target: 0.0,
        v_target: v,
    }
}

fn run_quiet(
    s0: BikeState<f64>,
    cmds: &[ActuatorCommand<f64>],
    dc: &DisturbanceConfig<f64>,
    seed: u64,
) -> Vec<BikeState<f64>> {
    let p = PhysicalParams::nominal();
    let act = ActuatorModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = s0;
    let mut out = vec![s];
    for c in cmds {
        s = step_control(&s, c, &p, dc, &act, DT, 1, &mut rng);
        out.push(s);
    }
    out
}

pub fn dynamics_equilibrium() -> Check {
    let traj = run_quiet(BikeState::upright(2.0), &vec![hold(2.0); 3200], &DisturbanceConfig::none(), 0);
    let worst = traj.iter().map(|s| s.phi.abs()).fold(0.0, f64::max);
    ensure!(worst == 0.0, "max |phi| {worst:e} over 3200 steps");
    Ok("max |phi| = 0 over 3200 steps".into())
}

pub fn dynamics_growth() -> Check {
    let phi0 = 0.01;
    let s0 = BikeState {
        phi: phi0,
        ..BikeState::upright(2.0)
    };
    let traj = run_quiet(s0, &vec![hold(2.0); 25], &DisturbanceConfig::none(), 0);
    let got = traj[25].phi;
    let want = phi0 * ((9.81f64 / 0.65).sqrt() * 0.5).cosh();
    let rel = (got - want).abs() / want;
    ensure!(rel < 0.05, "phi(0.5 s) {got} vs {want} ({:.2}%)", 100.0 * rel);
    Ok(format!("phi(0.5 s) within {:.2}% of the cosh solution", 100.0 * rel))
}

/// Zero-noise trajectories under mirrored initial state and commands.
pub fn mirror_error(seed: u64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = BikeState {
        phi: rng.random_range(-0.3..0.3),
        phi_dot: rng.random_range(-1.0..1.0),
        delta: rng.random_range(-0.4..0.4),
        delta_dot: 0.0,
        v: rng.random_range(0.5..5.0),
        psi: rng.random_range(-PI..PI),
        x: rng.random_range(-5.0..5.0),
        y: rng.random_range(-5.0..5.0),
        t: 0.0,
    };
    let cmds: Vec<ActuatorCommand<f64>> = (0..steps)
        .map(|_| ActuatorCommand {
            delta_target: rng.random_range(-0.6..0.6),
            v_target: rng.random_range(0.0..6.0),
        })
        .collect();
    let mirrored: Vec<ActuatorCommand<f64>> = cmds
        .iter()
        .map(|c| ActuatorCommand {
            delta_target: -c.delta_target,
            ..*c
        })
        .collect();
    let a = run_quiet(s0, &cmds, &DisturbanceConfig::none(), 1);
    let b = run_quiet(s0.mirrored(), &mirrored, &DisturbanceConfig::none(), 2);
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let m = x.mirrored();
        for (u, w) in [
            (m.phi, y.phi),
            (m.phi_dot, y.phi_dot),
            (m.delta, y.delta),
            (m.delta_dot, y.delta_dot),
            (m.v, y.v),
            (m.psi, y.psi),
            (m.x, y.x),
            (m.y, y.y),
        ] {
            worst = worst.max((u - w).abs());
        }
    }
    worst
}

pub fn dynamics_mirror() -> Check {
    let worst = (0..20).map(|s| mirror_error(s, 400)).fold(0.0, f64::max);
    ensure!(worst <= 1e-9, "mirror deviation {worst:e}");
    Ok(format!("mirror deviation {worst:.1e} over 20 trajectories"))
}

fn noisy() -> DisturbanceConfig<f64> {
    DisturbanceConfig {
        diffusion_std: 0.25,
        jump_rate: 0.5,
        jump_std: 0.3,
        slope_angle: 0.05,
        diffusion_enabled: true,
        jump_enabled: true,
        slope_enabled: true,
    }
}

pub fn trajectory_bits(seed: u64) -> Vec<u64> {
    let cmds: Vec<_> = (0..500)
        .map(|k| ActuatorCommand {
            delta_target: 0.3 * (k as f64 * 0.05).sin(),
            v_target: 3.0,
        })
        .collect();
    run_quiet(BikeState::upright(2.0), &cmds, &noisy(), seed)
        .iter()
        .flat_map(|s| [s.phi, s.phi_dot, s.delta, s.v, s.psi, s.x, s.y].map(f64::to_bits))
        .collect()
}

pub fn dynamics_determinism() -> Check {
    for seed in 0..5 {
        ensure!(trajectory_bits(seed) == trajectory_bits(seed), "seed {seed} diverged");
    }
    ensure!(trajectory_bits(0) != trajectory_bits(1), "noise ignores the seed");
    Ok("noisy trajectories bit-identical per seed".into())
}

pub fn dynamics_oracles() -> Check {
    let parts = [
        dynamics_equilibrium()?,
        dynamics_growth()?,
        dynamics_mirror()?,
        dynamics_determinism()?,
    ];
    Ok(parts.join("; "))
}

/// Reward recomputed from its definition with the default weights.
pub fn reference_reward(v: f64, v_cmd: f64, e_psi: f64, a: [f64; 2], prev: [f64; 2]) -> f64 {
    let r_vel = (-0.25 * (v - v_cmd).abs()).exp();
    let r_steer = (-0.1 * e_psi.to_degrees().abs()).exp();
    let r_act = -(a[0].abs() + a[1].abs());
    let r_rate = -((a[0] - prev[0]).powi(2) + (a[1] - prev[1]).powi(2)).sqrt();
    1.0 + 3.0 * r_vel + 5.0 * r_steer + 1.0 * r_act + 2.0 * r_rate
}

fn reward_at(v: f64, v_cmd: f64, e_psi: f64, a: [f64; 2], prev: [f64; 2]) -> (f64, [f64; 5]) {
    let s = BikeState {
        psi: -e_psi,
        ..BikeState::upright(v)
    };
    let c = CommandState::fixed(v_cmd, 0.0);
    let (total, terms) = compute_reward(&s, &s, &a, &prev, &c, &RewardConfig::default());
    (total, terms.as_array())
}

pub fn reward_exactness(samples: usize) -> Check {
    let cases: [(f64, f64, [f64; 2], [f64; 2], [f64; 5], f64); 3] = [
        (2.0, 2.0, [0.0; 2], [0.0; 2], [1.0, 1.0, 1.0, 0.0, 0.0], 9.0),
        (1.0, 5.0, [0.0; 2], [0.0; 2], [1.0, (-1f64).exp(), 1.0, 0.0, 0.0], 6.0 + 3.0 * (-1f64).exp()),
        (2.0, 2.0, [1.0, -1.0], [0.0; 2], [1.0, 1.0, 1.0, -2.0, -SQRT_2], 9.0 - 2.0 - 2.0 * SQRT_2),
    ];
    for (v, v_cmd, a, prev, terms, total) in cases {
        let (t, got) = reward_at(v, v_cmd, 0.0, a, prev);
        for (x, y) in got.iter().zip(terms) {
            ensure!((x - y).abs() <= 1e-12, "terms {got:?} vs {terms:?}");
        }
        ensure!((t - total).abs() <= 1e-12, "total {t} vs {total}");
    }

    let (lo, hi) = reward_bounds(&RewardConfig::default().weights);
    ensure!(
        (lo - (1.0 - 2.0 - 4.0 * SQRT_2)).abs() < 1e-12 && hi == 9.0,
        "bounds ({lo}, {hi})"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut seen = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_identity: f64 = 0.0;
    let unit = |rng: &mut ChaCha8Rng| {
        // A third of the draws sit on the box corners, where the extremes live.
        if rng.random_bool(1.0 / 3.0) {
            if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            rng.random_range(-1.0..=1.0)
        }
    };
    for _ in 0..samples {
        let v = rng.random_range(0.0..6.0);
        let v_cmd = rng.random_range(1.0..5.0);
        let e = rng.random_range(-PI..PI);
        let a = [unit(&mut rng), unit(&mut rng)];
        let prev = [unit(&mut rng), unit(&mut rng)];
        let (t, _) = reward_at(v, v_cmd, e, a, prev);
        worst_identity = worst_identity.max((t - reference_reward(v, v_cmd, e, a, prev)).abs());
        ensure!(t >= lo && t <= hi, "total {t} outside [{lo}, {hi}]");
        seen = (seen.0.min(t), seen.1.max(t));
    }
    ensure!(worst_identity <= 1e-12, "decomposition error {worst_identity:e}");
    Ok(format!(
        "hand cases exact; {samples} steps in [{lo:.4}, {hi}] (seen [{:.4}, {:.4}]); identity error {worst_identity:.1e}",
        seen.0, seen.1
    ))
}

fn next_up(x: f64) -> f64 {
    if x >= 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

pub fn termination_exactness() -> Check {
    let cfg = EnvConfig::default();
    ensure!(cfg.termination_roll == FRAC_PI_4, "bound {}", cfg.termination_roll);
    let at = |phi: f64, k: u32| {
        check_termination(
            &BikeState {
                phi,
                ..BikeState::upright(2.0)
            },
            k,
            &cfg,
        )
    };
    let b = FRAC_PI_4;
    for (phi, k, want) in [
        (b, 10, (false, false)),
        (-b, 10, (false, false)),
        (next_up(b), 10, (true, false)),
        (next_down(-b), 10, (true, false)),
        (next_down(b), 3199, (false, false)),
        (0.0, 3199, (false, false)),
        (0.0, 3200, (false, true)),
        (next_up(b), 3200, (true, true)),
        (0.8, 10, (true, false)),
        (0.7853, 100, (false, false)),
    ] {
        ensure!(at(phi, k) == want, "phi {phi:e} step {k}: {:?}", at(phi, k));
    }
    // Trajectories that graze the bound, cross it by one ulp or jump past it.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let n = rng.random_range(1..3300usize);
        let phis: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..5) {
                0 => b,
                1 => -b,
                2 => next_up(b) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                3 => next_down(b) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                _ => rng.random_range(-0.9..0.9),
            })
            .collect();
        let first_fall = phis.iter().position(|p| p.abs() > b);
        let first_end = (1..=n as u32).zip(&phis).find_map(|(k, &p)| {
            let (term, trunc) = at(p, k);
            (term || trunc).then_some((k, term, trunc))
        });
        let want = match first_fall {
            Some(i) if i + 1 <= 3200 => Some((i as u32 + 1, true, i + 1 == 3200)),
            _ if n >= 3200 => Some((3200, false, true)),
            _ => None,
        };
        ensure!(first_end == want, "episode end {first_end:?} vs {want:?}");
    }
    Ok("45 degree bound exclusive at +-1 ulp; 3200-step truncation; 2000 adversarial trajectories".into())
}

/// Kolmogorov-Smirnov distance between a sample and U(lo, hi).
pub fn ks_uniform(xs: &mut [f64], lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Every randomized quantity of an episode start, in table order.
fn start_values(s: &EpisodeStart) -> [f64; 14] {
    let act = ActuatorModel::<f64>::default();
    let v_hub = (s.prev_action[1] + 1.0) / 2.0 * act.v_max;
    [
        s.params.m_total,
        s.params.h_com,
        s.params.mu,
        s.params.actuator_gain,
        s.params.obs_noise_frac,
        s.state.v,
        s.state.phi.to_degrees(),
        s.state.delta.to_degrees(),
        v_hub / HUB_WHEEL_RADIUS,
        s.commands.v_cmd,
        s.commands.delta_cmd.to_degrees(),
        s.commands.next_resample_t,
        s.disturbance.diffusion_std,
        s.disturbance.slope_angle,
    ]
}

fn spec_vars(spec: &RandomizationSpec) -> [RandomVar; 14] {
    let (d, i, t, r) = (&spec.dynamics, &spec.initial, &spec.task, &spec.terrain);
    [
        d.m_total,
        d.h_com,
        d.mu,
        d.actuator_gain,
        d.obs_noise_frac,
        i.v_init,
        i.phi_init_deg,
        i.servo_deg,
        i.hub_omega,
        t.v_cmd,
        t.delta_cmd_deg,
        t.resample_interval,
        r.diffusion_std,
        r.slope_angle,
    ]
}

const GROUP_OF: [usize; 14] = [0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 3, 3];

pub fn randomization_conformance(resets: usize) -> Check {
    let mut spec = RandomizationSpec::full();
    spec.terrain.enabled = true;
    let table = [
        (15.0, 45.0),
        (0.50, 0.80),
        (0.5, 1.2),
        (0.9, 1.1),
        (0.01, 0.20),
        (1.0, 2.5),
        (-10.0, 10.0),
        (-20.0, 20.0),
        (0.0, 3.0),
        (1.0, 5.0),
        (-10.0, 10.0),
        (3.0, 5.0),
        (0.0, 0.25),
        (-0.087, 0.087),
    ];
    for (var, (lo, hi)) in spec_vars(&spec).iter().zip(table) {
        ensure!(var.lo == lo && var.hi == hi, "range [{}, {}] vs [{lo}, {hi}]", var.lo, var.hi);
    }
    let cfg = EnvConfig {
        randomization: spec.clone(),
        ..EnvConfig::default()
    };
    let mut cols = vec![Vec::with_capacity(resets); 14];
    let mut jump_rates = Vec::with_capacity(resets);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..resets {
        let s = reset_sample(&cfg, &mut rng);
        for (c, v) in cols.iter_mut().zip(start_values(&s)) {
            c.push(v);
        }
        jump_rates.push(s.disturbance.jump_rate);
    }
    cols.push(jump_rates);
    let mut bounds = table.to_vec();
    bounds.push((0.0, 0.5));
    let mut worst_ks: f64 = 0.0;
    for (k, (col, (lo, hi))) in cols.iter_mut().zip(bounds).enumerate() {
        let tol = 1e-9 * (hi - lo).max(1.0);
        ensure!(
            col.iter().all(|&x| x >= lo - tol && x <= hi + tol),
            "variable {k} leaves [{lo}, {hi}]"
        );
        let d = ks_uniform(col, lo, hi);
        ensure!(d < 0.02, "variable {k}: KS distance {d}");
        worst_ks = worst_ks.max(d);
    }

    // Purity: one group on leaves every other quantity at its nominal value,
    // and switching a group off never changes another group's draws.
    let nominal = {
        let cfg = EnvConfig {
            randomization: RandomizationSpec::none(),
            ..EnvConfig::default()
        };
        start_values(&reset_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(0)))
    };
    for g in 0..4 {
        let mut only = RandomizationSpec::none();
        let mut all_but = spec.clone();
        match g {
            0 => (only.dynamics.enabled, all_but.dynamics.enabled) = (true, false),
            1 => (only.initial.enabled, all_but.initial.enabled) = (true, false),
            2 => (only.task.enabled, all_but.task.enabled) = (true, false),
            _ => (only.terrain.enabled, all_but.terrain.enabled) = (true, false),
        }
        for seed in 0..200 {
            let draw = |spec: &RandomizationSpec| {
                let cfg = EnvConfig {
                    randomization: spec.clone(),
                    ..EnvConfig::default()
                };
                start_values(&reset_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)))
            };
            let (o, full, b) = (draw(&only), draw(&spec), draw(&all_but));
            for k in 0..14 {
                if GROUP_OF[k] == g {
                    ensure!(b[k] == nominal[k], "group {g} off: quantity {k} not nominal");
                } else {
                    ensure!(o[k] == nominal[k], "group {g} alone moved quantity {k}");
                    ensure!(b[k] == full[k], "group {g} toggle shifted quantity {k}");
                }
            }
        }
    }
    Ok(format!(
        "{resets} resets inside table ranges; max KS {worst_ks:.4}; group toggles pure"
    ))
}

/// Central-difference check of a network's parameter gradient.
pub fn mlp_rel_error(net: &Mlp<f64>, x: &[f64], c: &[f64]) -> f64 {
    let f = |n: &Mlp<f64>| -> f64 { n.predict(x).unwrap().iter().zip(c).map(|(y, c)| y * c).sum() };
    let (_, cache) = net.forward(x).unwrap();
    let g = net.backward(&cache, c).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let mut p = net.clone();
        p.params_mut()[i] += h;
        let mut m = net.clone();
        m.params_mut()[i] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        let a = g.data[i];
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6));
    }
    worst
}

pub fn gradient_check(nets: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..nets {
        let input = rng.random_range(1..10);
        let depth = rng.random_range(1..4);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..16)).collect();
        let output = rng.random_range(1..4);
        let batch = rng.random_range(1..5);
        let net = Mlp::<f64>::random(Topology::new(input, &hidden, output), 1.4, 0.7, &mut rng);
        let x: Vec<f64> = (0..input * batch).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..output * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        worst = worst.max(mlp_rel_error(&net, &x, &c));
    }
    ensure!(worst < 1e-3, "max relative error {worst:e}");
    Ok(format!("{nets} random nets, max relative error {worst:.1e}"))
}

pub struct RandomBuffer {
    pub horizon: usize,
    pub num_envs: usize,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncation_values: Vec<f64>,
    pub bootstrap: Vec<f64>,
}

impl RandomBuffer {
    pub fn new(rng: &mut ChaCha8Rng, bootstrap_truncations: bool) -> Self {
        let horizon = rng.random_range(1..40);
        let num_envs = rng.random_range(1..6);
        let n = horizon * num_envs;
        let done_p = [0.0, 0.05, 0.3, 1.0][rng.random_range(0..4)];
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(done_p)).collect();
        let truncation_values = dones
            .iter()
            .map(|&d| if d && bootstrap_truncations && rng.random_bool(0.5) { rng.random_range(-3.0..3.0) } else { 0.0 })
            .collect();
        Self {
            horizon,
            num_envs,
            rewards: (0..n).map(|_| rng.random_range(-5.0..9.0)).collect(),
            values: (0..n).map(|_| rng.random_range(-20.0..20.0)).collect(),
            dones,
            truncation_values,
            bootstrap: (0..num_envs).map(|_| rng.random_range(-20.0..20.0)).collect(),
        }
    }

    pub fn input(&self) -> GaeInput<'_> {
        GaeInput {
            horizon: self.horizon,
            num_envs: self.num_envs,
            rewards: &self.rewards,
            values: &self.values,
            dones: &self.dones,
            truncation_values: &self.truncation_values,
            bootstrap: &self.bootstrap,
        }
    }

    /// `A_t = sum_l (gamma lambda)^l delta_{t+l}`, the sum stopping after
    /// the first done at or after `t`.
    pub fn double_sum(&self, gamma: f64, lambda: f64) -> Vec<f64> {
        let (h, n) = (self.horizon, self.num_envs);
        let delta = |t: usize, e: usize| {
            let i = t * n + e;
            let next = if self.dones[i] {
                self.truncation_values[i]
            } else if t + 1 < h {
                self.values[i + n]
            } else {
                self.bootstrap[e]
            };
            self.rewards[i] + gamma * next - self.values[i]
        };
        let mut out = vec![0.0; h * n];
        for e in 0..n {
            for t in 0..h {
                let mut acc = 0.0;
                for l in 0..h - t {
                    acc += (gamma * lambda).powi(l as i32) * delta(t + l, e);
                    if self.dones[(t + l) * n + e] {
                        break;
                    }
                }
                out[t * n + e] = acc;
            }
        }
        out
    }
}

pub fn gae_equivalence(buffers: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for k in 0..buffers {
        let buf = RandomBuffer::new(&mut rng, k % 2 == 0);
        let (gamma, lambda) = if k % 10 == 0 { (0.99, 0.95) } else { (rng.random_range(0.5..=1.0), rng.random_range(0.0..=1.0)) };
        let got = compute_gae(&buf.input(), gamma, lambda);
        let want = buf.double_sum(gamma, lambda);
        for (i, (a, b)) in got.advantages.iter().zip(&want).enumerate() {
            worst = worst.max((a - b).abs());
            ensure!(
                (got.returns[i] - (a + buf.values[i])).abs() <= 1e-12,
                "returns != advantages + values"
            );
        }
    }
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("{buffers} random buffers with done boundaries, max deviation {worst:.1e}"))
}

pub fn ppo_identity() -> Check {
    ensure!(clipped_surrogate(1.5, 1.0, 0.2) == (1.2, true), "ratio 1.5 case");
    ensure!(clipped_surrogate(0.5, -1.0, 0.2) == (-0.8, true), "ratio 0.5 case");

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut policy = ActorCritic::<f32>::new(&[32, 32], false, &mut rng);
    policy.log_std = vec![-0.3, 0.2];
    let n = 512;
    let obs: Vec<Observation> = (0..n)
        .map(|_| {
            let mut o = [0.0; OBS_DIM];
            for v in o.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            Observation(o)
        })
        .collect();
    let inputs = policy.preprocess(&obs);
    let (out, _) = policy.forward(&inputs).map_err(|e| e.to_string())?;
    let ls: Vec<f64> = policy.clamped_log_std().iter().map(|&l| l as f64).collect();
    let mut actions = Vec::with_capacity(2 * n);
    let mut old = Vec::with_capacity(n);
    for j in 0..n {
        let mean = [out.mean[2 * j] as f64, out.mean[2 * j + 1] as f64];
        let a: Vec<f32> = (0..2)
            .map(|k| (mean[k] + ls[k].exp() * rng.random_range(-2.0..2.0)) as f32)
            .collect();
        let a64: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        old.push(gaussian_log_prob(&mean, &ls, &a64));
        actions.extend(a);
    }
    let mut adv: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..5.0)).collect();
    let mean = adv.iter().sum::<f64>() / n as f64;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    let returns = vec![0.0; n];
    let samples = SampleSet {
        inputs: &inputs,
        actions: &actions,
        old_log_probs: &old,
        advantages: &adv,
        returns: &returns,
    };
    let idx: Vec<usize> = (0..n).collect();
    let coef = LossCoefficients {
        clip_eps: 0.2,
        value_coef: 1.0,
        entropy_coef: 0.0,
    };
    let (stats, _) = ppo_loss(&policy, &samples, &idx, &coef, false).map_err(|e| e.to_string())?;
    ensure!(stats.clip_fraction == 0.0, "clip fraction {}", stats.clip_fraction);
    ensure!(stats.surrogate.abs() < 1e-6, "surrogate mean {}", stats.surrogate);
    Ok(format!(
        "theta = theta_old: clip fraction 0, surrogate {:.1e}; scalar cases 1.2 and -0.8 exact",
        stats.surrogate
    ))
}

pub fn care_correctness() -> Check {
    let p = PhysicalParams::nominal();
    let act = ActuatorModel::default();
    let cfg = LqrConfig::default();
    let mut worst_res: f64 = 0.0;
    let mut worst_abscissa = f64::NEG_INFINITY;
    for v in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let sol = lqr_gain(&cfg, &p, &act, v).map_err(|e| e.to_string())?;
        let (a, b) = linearize(&p, &act, v);
        let a = Mat::from_rows(a);
        let res = care_residual(&a, &b, &Mat::diag(&cfg.q), cfg.r, &sol.p).max_abs();
        let acl = a.add(&Mat::outer(&b, &sol.k).scale(-1.0));
        let s = spectral_abscissa(&acl);
        ensure!(res < 1e-9, "v={v}: residual {res:e}");
        ensure!(s < 0.0, "v={v}: closed-loop abscissa {s}");
        worst_res = worst_res.max(res);
        worst_abscissa = worst_abscissa.max(s);
    }
    let one = Mat::diag(&[1.0]);
    let p0 = solve_care(&Mat::diag(&[0.0]), &[1.0], &one, 1.0, 1e-13, 100).map_err(|e| e.to_string())?;
    let p1 = solve_care(&one, &[1.0], &one, 1.0, 1e-13, 100).map_err(|e| e.to_string())?;
    ensure!((p0.p.get(0, 0) - 1.0).abs() < 1e-9, "a=0: P = {}", p0.p.get(0, 0));
    ensure!(
        (p1.p.get(0, 0) - (1.0 + SQRT_2)).abs() < 1e-9,
        "a=1: P = {}",
        p1.p.get(0, 0)
    );
    Ok(format!(
        "v in 1..5: residual <= {worst_res:.1e}, spectral abscissa <= {worst_abscissa:.3}; scalar P = 1 and 1 + sqrt 2"
    ))
}

/// Noise-free nominal episode from a 5 degree lean at 2 m/s; returns max |phi|
/// or the step of a fall.
pub fn witness(controller: &mut dyn Controller) -> Result<f64, usize> {
    let cfg = Arc::new(EnvConfig {
        randomization: RandomizationSpec::none(),
        ..EnvConfig::default()
    });
    let mut env = BikeEnv::new(cfg.clone(), 0, 0);
    let state = BikeState {
        phi: 5f64.to_radians(),
        ..BikeState::upright(2.0)
    };
    env.reset_to(EpisodeStart {
        state,
        params: PhysicalParams::nominal(),
        disturbance: cfg.disturbance,
        commands: CommandState::fixed(2.0, 0.0),
        prev_action: [0.0, 2.0 * 2.0 / 6.0 - 1.0],
    });
    env.hold_commands = true;
    controller.reset();
    let mut worst: f64 = 0.0;
    let mut obs = env.observation();
    for k in 0..3200 {
        let r = env.step(&controller.act(&obs));
        worst = worst.max(env.state.phi.abs());
        if r.terminated {
            return Err(k);
        }
        obs = r.obs;
    }
    Ok(worst)
}

pub fn baseline_witness(pid: PidConfig, lqr: LqrConfig) -> Check {
    let act = ActuatorModel::default();
    let mut out = Vec::new();
    for (name, c) in [
        ("PID", Box::new(PidController::new(pid, act)) as Box<dyn Controller>),
        ("LQR", Box::new(LqrController::new(lqr, PhysicalParams::nominal(), act))),
    ] {
        let mut c = c;
        match witness(c.as_mut()) {
            Ok(w) if w < 0.5 => out.push(format!("{name} max |phi| {w:.4}")),
            Ok(w) => return Err(format!("{name} max |phi| {w}")),
            Err(k) => return Err(format!("{name} fell at step {k}")),
        }
    }
    Ok(out.join(", "))
}

fn synthetic(n: usize, mut f: impl FnMut(usize, f64) -> TraceStep) -> Trace {
    Trace {
        episode: 0,
        fell: false,
        steps: (0..n).map(|k| f(k, k as f64 * DT)).collect(),
    }
}

pub fn metric_closed_forms() -> Check {
    // STE: 3 degree sinusoid about the command, whole periods after settling.
    let amp = 3f64.to_radians();
    let tr = synthetic(50 + 25 * 40, |_, t| TraceStep {
        t,
        delta_cmd: 0.07,
        delta: 0.07 + amp * (4.0 * PI * t).sin(),
        v_cmd: 3.0,
        v: 3.0,
        ..TraceStep::default()
    });
    let ste = tracking_errors(&[tr]).ok_or("no tracking samples")?.ste;
    ensure!((ste - 3.0 / SQRT_2).abs() < 1e-9, "STE {ste}");

    // SRL: first-order response from rest to a speed step.
    let tau = 0.3;
    let k0 = 40;
    let step = synthetic(600, |k, t| {
        let t0 = k0 as f64 * DT;
        TraceStep {
            t,
            v_cmd: if k < k0 { 0.0 } else { 4.0 },
            v: if k < k0 { 0.0 } else { 4.0 * (1.0 - (-(t - t0) / tau).exp()) },
            ..TraceStep::default()
        }
    });
    let srl = response_latency(&[step]).stats.ok_or("no latency event")?.mean;
    ensure!(
        srl >= tau * LN_10 - 1e-12 && srl < tau * LN_10 + DT,
        "SRL {srl} vs {}",
        tau * LN_10
    );

    // BSR: three balanced episodes and one fall.
    let ep = |phi: f64, fell: bool| Trace {
        fell,
        ..synthetic(100, |_, t| TraceStep {
            t,
            phi,
            ..TraceStep::default()
        })
    };
    let bsr = balance_success_rate(&[ep(0.1, false), ep(-0.49, false), ep(0.0, false), ep(0.6, true)]);
    ensure!(bsr == Some(75.0), "BSR {bsr:?}");

    // BRT: an impulse decaying linearly into the band, held there.
    let brt_trace = synthetic(400, |k, t| TraceStep {
        t,
        phi: if k < 50 { 0.35 * (1.0 - k as f64 / 50.0) + 0.05 * (k as f64 / 50.0) } else { 0.05 },
        ..TraceStep::default()
    });
    // |phi| < 0.1 first at the row where 0.35 - 0.3 k / 50 < 0.1, k = 42.
    let brt = recovery_time(&brt_trace, 0).ok_or("no recovery")?;
    ensure!((brt - 42.0 * DT).abs() < 1e-12, "BRT {brt}");
    let never = synthetic(400, |_, t| TraceStep {
        t,
        phi: 0.2,
        ..TraceStep::default()
    });
    ensure!(recovery_time(&never, 0).is_none(), "recovery without entering the band");
    Ok(format!(
        "STE {ste:.12} deg (A/sqrt 2 = {:.12}); SRL {srl:.4} s (tau ln 10 = {:.4}); BSR 75; BRT {brt:.2} s",
        3.0 / SQRT_2,
        tau * LN_10
    ))
}

/// Integrates one step directly, for property tests that need raw access.
pub fn single_step(s: &BikeState<f64>, c: &ActuatorCommand<f64>, seed: u64) -> BikeState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    integrate(
        s,
        c,
        &PhysicalParams::nominal(),
        &DisturbanceConfig::none(),
        &ActuatorModel::default(),
        DT,
        &mut rng,
    )
}
