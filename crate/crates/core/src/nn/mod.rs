//! Dense networks with hand-written reverse mode, Adam and the Gaussian
//! actor-critic used by PPO.

pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod policy;

pub use mlp::{ForwardCache, Gradients, Mlp, Topology};
pub use optim::{clip_global_norm, cosine_lr, Adam};
pub use policy::{gaussian_entropy, gaussian_log_prob, ActorCritic, PolicyCache, RunningNorm};
