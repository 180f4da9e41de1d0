//! The live simulation owned by the service loop. All operator input arrives
//! as messages; every output is a message for one client or for all.

use std::sync::Arc;

use bikelab_core::baselines::{
    policy_actions, Controller, ControllerKind, LqrConfig, LqrController, PidConfig, PidController,
};
use bikelab_core::env::reward::RewardTerms;
use bikelab_core::env::{Action, BikeEnv, EnvConfig};
use bikelab_core::eval::ScenarioSpec;
use bikelab_core::nn::ActorCritic;
use bikelab_core::{Error, Result};

use crate::wire::{clamp_command, ClientMsg, EventKind, ServerMsg, StateMsg, WireTerms};

pub type ClientId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    All(ServerMsg),
    To(ClientId, ServerMsg),
}

/// Everything the live simulation needs at start-up.
#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base: EnvConfig,
    pub pid: PidConfig,
    pub lqr: LqrConfig,
    pub policy: Option<Arc<ActorCritic<f32>>>,
    pub controller: ControllerKind,
    pub scenario: String,
    pub v_cmd: f64,
    pub delta_cmd_deg: f64,
    pub state_hz: f64,
    pub fall_reset_s: f64,
    pub seed: u64,
}

enum Active {
    Policy(Arc<ActorCritic<f32>>),
    Baseline(Box<dyn Controller>),
}

pub struct LiveSim {
    cfg: LiveConfig,
    env: BikeEnv,
    active: Active,
    kind: ControllerKind,
    scenario: String,
    v_cmd: f64,
    delta_cmd_deg: f64,
    authority: Option<ClientId>,
    paused: bool,
    /// Ticks spent lying down after a fall.
    fallen_ticks: Option<u64>,
    episode: u64,
    tick: u64,
    state_every: u64,
    last_terms: RewardTerms,
}

impl LiveSim {
    pub fn new(cfg: LiveConfig) -> Result<Self> {
        let (v, d, _) = clamp_command(cfg.v_cmd, cfg.delta_cmd_deg);
        let env_cfg = scenario_env(&cfg.base, &cfg.scenario)?;
        let active = make_controller(&cfg, cfg.controller)?;
        let state_every = (1.0 / (cfg.base.control_dt * cfg.state_hz)).ceil().max(1.0) as u64;
        let mut sim = Self {
            env: BikeEnv::new(Arc::new(env_cfg), cfg.seed, 0),
            active,
            kind: cfg.controller,
            scenario: cfg.scenario.clone(),
            v_cmd: v,
            delta_cmd_deg: d,
            authority: None,
            paused: false,
            fallen_ticks: None,
            episode: 0,
            tick: 0,
            state_every,
            last_terms: RewardTerms::default(),
            cfg,
        };
        sim.start_episode();
        Ok(sim)
    }

    pub fn control_dt(&self) -> f64 {
        self.cfg.base.control_dt
    }

    pub fn authority(&self) -> Option<ClientId> {
        self.authority
    }

    pub fn commands(&self) -> (f64, f64) {
        (self.v_cmd, self.delta_cmd_deg)
    }

    fn start_episode(&mut self) {
        self.env.hold_commands = true;
        self.env.set_commands(self.v_cmd, self.delta_cmd_deg.to_radians());
        self.fallen_ticks = None;
        self.last_terms = RewardTerms::default();
        if let Active::Baseline(c) = &mut self.active {
            c.reset();
        }
    }

    fn reset_episode(&mut self) {
        self.env.reset();
        self.episode += 1;
        self.start_episode();
    }

    pub fn state(&self) -> StateMsg {
        let s = &self.env.state;
        StateMsg {
            t: s.t,
            phi: s.phi,
            phi_dot: s.phi_dot,
            delta: s.delta,
            v: s.v,
            psi: s.psi,
            x: s.x,
            y: s.y,
            reward_terms: WireTerms::from(self.last_terms),
            controller: self.kind.to_string(),
            v_cmd: self.v_cmd,
            delta_cmd_deg: self.delta_cmd_deg,
            episode: self.episode,
            paused: self.paused,
        }
    }

    /// One control period.
    pub fn tick(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        self.tick += 1;
        if !self.paused {
            if let Some(k) = self.fallen_ticks.as_mut() {
                *k += 1;
                if *k as f64 * self.control_dt() >= self.cfg.fall_reset_s - 1e-9 {
                    self.reset_episode();
                    out.push(Outbound::All(ServerMsg::event(EventKind::Reset)));
                }
            } else {
                let action = self.act();
                let r = self.env.step(&action);
                self.last_terms = r.reward_terms.weighted(&self.env.config().reward.weights);
                if r.terminated {
                    self.fallen_ticks = Some(0);
                    out.push(Outbound::All(ServerMsg::event(EventKind::Fall)));
                } else if r.truncated {
                    out.push(Outbound::All(ServerMsg::event(EventKind::Timeout)));
                    self.reset_episode();
                    out.push(Outbound::All(ServerMsg::event(EventKind::Reset)));
                }
            }
        }
        if self.tick % self.state_every == 0 {
            out.push(Outbound::All(ServerMsg::State(self.state())));
        }
        out
    }

    /// The controller sees the operator commands from the tick they arrive.
    fn act(&mut self) -> Action {
        let mut obs = self.env.observation();
        obs.0[6] = self.v_cmd;
        obs.0[7] = self.delta_cmd_deg.to_radians();
        match &mut self.active {
            Active::Policy(p) => policy_actions(p, &[obs])[0],
            Active::Baseline(c) => c.act(&obs),
        }
    }

    pub fn disconnect(&mut self, client: ClientId) {
        if self.authority == Some(client) {
            self.authority = None;
        }
    }

    /// Applies one client message. Control messages need command authority,
    /// which the first sender acquires when nobody holds it.
    pub fn handle(&mut self, client: ClientId, msg: ClientMsg) -> Vec<Outbound> {
        let seq = msg.seq();
        let mut out = Vec::new();
        if let ClientMsg::Takeover { .. } = msg {
            if let Some(old) = self.authority.filter(|&o| o != client) {
                out.push(Outbound::To(old, ServerMsg::event(EventKind::AuthorityRevoked)));
            }
            if self.authority != Some(client) {
                self.authority = Some(client);
                out.push(Outbound::To(client, ServerMsg::event(EventKind::AuthorityGranted)));
            }
            out.push(Outbound::To(client, ServerMsg::ack(seq)));
            return out;
        }
        if let ClientMsg::Release { .. } = msg {
            if self.authority == Some(client) {
                self.authority = None;
            }
            out.push(Outbound::To(client, ServerMsg::ack(seq)));
            return out;
        }
        match self.authority {
            Some(holder) if holder != client => {
                out.push(Outbound::To(
                    client,
                    ServerMsg::error(Some(seq), "command authority is held by another client; send takeover"),
                ));
                return out;
            }
            Some(_) => {}
            None => {
                self.authority = Some(client);
                out.push(Outbound::To(client, ServerMsg::event(EventKind::AuthorityGranted)));
            }
        }
        let reply = match msg {
            ClientMsg::Command {
                v_cmd,
                delta_cmd_deg,
                ..
            } => {
                if !(v_cmd.is_finite() && delta_cmd_deg.is_finite()) {
                    ServerMsg::error(Some(seq), "command values must be finite")
                } else {
                    let (v, d, clamped) = clamp_command(v_cmd, delta_cmd_deg);
                    self.v_cmd = v;
                    self.delta_cmd_deg = d;
                    self.env.set_commands(v, d.to_radians());
                    ServerMsg::Ack {
                        seq,
                        clamped,
                        v_cmd: Some(v),
                        delta_cmd_deg: Some(d),
                    }
                }
            }
            ClientMsg::Reset { scenario, .. } => {
                let name = scenario.unwrap_or_else(|| self.scenario.clone());
                match scenario_env(&self.cfg.base, &name) {
                    Ok(env_cfg) => {
                        self.env = BikeEnv::new(Arc::new(env_cfg), self.cfg.seed, self.episode + 1);
                        self.scenario = name;
                        self.episode += 1;
                        self.start_episode();
                        out.push(Outbound::All(ServerMsg::Event {
                            kind: EventKind::Reset,
                            detail: Some(self.scenario.clone()),
                        }));
                        ServerMsg::ack(seq)
                    }
                    Err(e) => ServerMsg::error(Some(seq), e.to_string()),
                }
            }
            ClientMsg::Pause { .. } => {
                self.paused = !self.paused;
                ServerMsg::ack(seq)
            }
            ClientMsg::SelectController { id, .. } => match id.parse::<ControllerKind>() {
                Ok(kind) => match make_controller(&self.cfg, kind) {
                    Ok(active) => {
                        self.active = active;
                        self.kind = kind;
                        ServerMsg::ack(seq)
                    }
                    Err(e) => ServerMsg::error(Some(seq), e.to_string()),
                },
                Err(e) => ServerMsg::error(Some(seq), e),
            },
            ClientMsg::Takeover { .. } | ClientMsg::Release { .. } => unreachable!("handled above"),
        };
        out.push(Outbound::To(client, reply));
        out
    }
}

fn scenario_env(base: &EnvConfig, name: &str) -> Result<EnvConfig> {
    let mut cfg = ScenarioSpec::by_name(name)?.env_config(base)?;
    // Live episodes end only by falling or by the configured step limit.
    cfg.max_episode_steps = base.max_episode_steps;
    Ok(cfg)
}

fn make_controller(cfg: &LiveConfig, kind: ControllerKind) -> Result<Active> {
    Ok(match kind {
        ControllerKind::Policy => Active::Policy(cfg.policy.clone().ok_or_else(|| {
            Error::Config("the policy controller needs a checkpoint".into())
        })?),
        ControllerKind::Pid => Active::Baseline(Box::new(PidController::new(cfg.pid, cfg.base.actuator))),
        ControllerKind::Lqr => Active::Baseline(Box::new(LqrController::new(
            cfg.lqr.clone(),
            cfg.base.base_params,
            cfg.base.actuator,
        ))),
    })
}
