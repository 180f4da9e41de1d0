//! Bicycle balance laboratory: a reduced-order stochastic bicycle simulator,
//! the balance-and-track MDP with domain randomization, a PPO trainer on a
//! hand-written MLP, PID/LQR baselines and the evaluation harness.

pub mod baselines;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BikeState64 = dynamics::BikeState<f64>;
pub type PhysicalParams64 = dynamics::PhysicalParams<f64>;
pub type Disturbance64 = dynamics::DisturbanceConfig<f64>;
pub type Actuator64 = dynamics::ActuatorModel<f64>;
pub type Policy32 = nn::ActorCritic<f32>;
