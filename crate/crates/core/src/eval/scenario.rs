//! Evaluation scenarios and the robustness matrix.

use serde::{Deserialize, Serialize};

use crate::dynamics::DisturbanceConfig;
use crate::env::randomization::RandomVar;
use crate::env::EnvConfig;
use crate::error::{Error, Result};

/// Episodes per scenario cell at desk scale.
pub const DESK_EPISODES: usize = 200;
/// Episodes per scenario cell at paper scale.
pub const PAPER_EPISODES: usize = 1000;
/// Nominal episode length, s (3,200 control steps at 50 Hz).
pub const NOMINAL_DURATION: f64 = 64.0;
/// Duration of the opt-in long balance run, s.
pub const LONG_RUN_DURATION: f64 = 1800.0;

/// One evaluation condition. Physical parameters are nominal unless a
/// friction range is given; initial states and commands follow the training
/// ranges with the velocity band applied to both start speed and commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Commanded and initial speed range, m/s.
    pub v_band: [f64; 2],
    /// Commanded steering range is `+-delta_cmd_max_deg`.
    pub delta_cmd_max_deg: f64,
    /// Initial roll range, deg.
    pub phi_init_deg: [f64; 2],
    /// Observation noise fraction rho.
    pub noise: f64,
    /// Per-frame observation loss probability.
    pub dropout: f64,
    /// Tyre friction range; nominal friction when absent.
    pub mu_range: Option<[f64; 2]>,
    pub terrain: DisturbanceConfig<f64>,
    /// Commands are held for the whole episode.
    pub hold_commands: bool,
    pub episodes: usize,
    pub duration_s: f64,
}

impl ScenarioSpec {
    pub fn nominal() -> Self {
        Self {
            name: "nominal".into(),
            v_band: [1.0, 5.0],
            delta_cmd_max_deg: 10.0,
            phi_init_deg: [-10.0, 10.0],
            noise: 0.0,
            dropout: 0.0,
            mu_range: None,
            terrain: DisturbanceConfig::none(),
            hold_commands: false,
            episodes: DESK_EPISODES,
            duration_s: NOMINAL_DURATION,
        }
    }

    fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::nominal()
        }
    }

    /// Looks up a scenario of the robustness matrix (or `nominal`/`long_run`).
    pub fn by_name(name: &str) -> Result<Self> {
        let mut s = Self::named(name);
        match name {
            "nominal" | "flat" | "no_noise" => {}
            "low_speed" => s.v_band = [1.0, 3.0],
            "normal_speed" => s.v_band = [3.0, 5.0],
            "max_noise" => s.noise = 0.2,
            "dropout" => s.dropout = 0.1,
            "rough" => {
                s.terrain.diffusion_std = 0.15;
                s.terrain.diffusion_enabled = true;
            }
            "gravel" => {
                s.mu_range = Some([0.5, 0.7]);
                s.terrain.diffusion_std = 0.25;
                s.terrain.diffusion_enabled = true;
            }
            "slope" => {
                s.terrain.slope_angle = 0.087;
                s.terrain.slope_enabled = true;
            }
            "steps" => {
                s.terrain.jump_rate = 0.5;
                s.terrain.jump_std = 0.3;
                s.terrain.jump_enabled = true;
            }
            "long_run" => {
                s.duration_s = LONG_RUN_DURATION;
                s.episodes = 1;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario '{other}' (expected one of {})",
                    ROBUSTNESS_MATRIX.join(", ")
                )))
            }
        }
        Ok(s)
    }

    pub fn with_episodes(mut self, n: usize) -> Self {
        self.episodes = n;
        self
    }

    pub fn max_steps(&self, control_dt: f64) -> u32 {
        (self.duration_s / control_dt).round() as u32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario '{}': {m}", self.name)));
        let [vlo, vhi] = self.v_band;
        if !(vlo >= 0.0 && vlo <= vhi && vhi <= 6.0) {
            return bad(format!("velocity band [{vlo}, {vhi}] outside [0, 6]"));
        }
        if !(0.0..=10.0).contains(&self.delta_cmd_max_deg) {
            return bad("delta_cmd_max_deg must lie in [0, 10]".into());
        }
        let [plo, phi] = self.phi_init_deg;
        if !(plo <= phi && plo > -45.0 && phi < 45.0) {
            return bad("initial roll range must lie inside (-45, 45) deg".into());
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return bad("noise must lie in [0, 0.5]".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        if let Some([lo, hi]) = self.mu_range {
            if !(lo > 0.0 && lo <= hi) {
                return bad("friction range must be positive and ordered".into());
            }
        }
        if self.episodes == 0 || !(self.duration_s > 0.0) {
            return bad("episodes and duration must be positive".into());
        }
        self.terrain.validate()
    }

    /// Environment configuration realizing this scenario on top of `base`.
    pub fn env_config(&self, base: &EnvConfig) -> Result<EnvConfig> {
        self.validate()?;
        let mut cfg = base.clone();
        cfg.max_episode_steps = self.max_steps(cfg.control_dt);
        cfg.dropout_rate = self.dropout;
        cfg.base_params.obs_noise_frac = self.noise;
        cfg.disturbance = self.terrain;

        let r = &mut cfg.randomization;
        r.dynamics.enabled = self.mu_range.is_some();
        let p = &cfg.base_params;
        for (var, nominal) in [
            (&mut r.dynamics.m_total, p.m_total),
            (&mut r.dynamics.h_com, p.h_com),
            (&mut r.dynamics.actuator_gain, p.actuator_gain),
            (&mut r.dynamics.obs_noise_frac, p.obs_noise_frac),
        ] {
            var.enabled = false;
            var.nominal = nominal;
        }
        r.dynamics.mu.nominal = p.mu;
        if let Some([lo, hi]) = self.mu_range {
            r.dynamics.mu = RandomVar::uniform(lo, hi, p.mu);
        }
        let [vlo, vhi] = self.v_band;
        r.initial.enabled = true;
        r.initial.v_init = RandomVar::uniform(vlo, vhi, vlo);
        r.initial.phi_init_deg =
            RandomVar::uniform(self.phi_init_deg[0], self.phi_init_deg[1], 0.0);
        r.task.enabled = true;
        r.task.v_cmd = RandomVar::uniform(vlo, vhi, vlo);
        let d = self.delta_cmd_max_deg;
        r.task.delta_cmd_deg = RandomVar::uniform(-d, d, 0.0);
        if self.hold_commands {
            let never = 2.0 * self.duration_s;
            r.task.resample_interval = RandomVar::uniform(never, never, never);
        }
        r.terrain.enabled = false;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Rows of the robustness table, in report order.
pub const ROBUSTNESS_MATRIX: [&str; 10] = [
    "low_speed",
    "normal_speed",
    "no_noise",
    "max_noise",
    "dropout",
    "flat",
    "rough",
    "gravel",
    "slope",
    "steps",
];

pub fn robustness_matrix(episodes: usize) -> Vec<ScenarioSpec> {
    ROBUSTNESS_MATRIX
        .iter()
        .map(|n| {
            ScenarioSpec::by_name(n)
                .expect("matrix names are known")
                .with_episodes(episodes)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::reset_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_scenarios_build_valid_configs() {
        let base = EnvConfig::default();
        for s in robustness_matrix(10) {
            let cfg = s.env_config(&base).unwrap();
            assert_eq!(cfg.max_episode_steps, 3200);
        }
        assert!(ScenarioSpec::by_name("lunar").is_err());
    }

    #[test]
    fn nominal_uses_nominal_physics() {
        let cfg = ScenarioSpec::nominal()
            .env_config(&EnvConfig::default())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let st = reset_sample(&cfg, &mut rng);
            assert_eq!(st.params, cfg.base_params);
            assert_eq!(st.params.obs_noise_frac, 0.0);
            assert!(st.disturbance.is_quiet());
            assert!((1.0..=5.0).contains(&st.state.v));
            assert!((1.0..=5.0).contains(&st.commands.v_cmd));
        }
    }

    #[test]
    fn noise_level_reaches_the_observation() {
        let cfg = ScenarioSpec::by_name("max_noise")
            .unwrap()
            .env_config(&EnvConfig::default())
            .unwrap();
        let st = reset_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(st.params.obs_noise_frac, 0.2);
    }

    #[test]
    fn gravel_draws_friction_in_range_only() {
        let cfg = ScenarioSpec::by_name("gravel")
            .unwrap()
            .env_config(&EnvConfig::default())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let st = reset_sample(&cfg, &mut rng);
            assert!((0.5..=0.7).contains(&st.params.mu));
            assert_eq!(st.params.m_total, cfg.base_params.m_total);
            assert_eq!(st.disturbance.effective_diffusion(), 0.25);
        }
    }

    #[test]
    fn held_commands_never_resample() {
        let s = ScenarioSpec {
            hold_commands: true,
            ..ScenarioSpec::nominal()
        };
        let cfg = s.env_config(&EnvConfig::default()).unwrap();
        let st = reset_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(st.commands.next_resample_t > s.duration_s);
    }
}
