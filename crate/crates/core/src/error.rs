use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("steering angle {0} rad outside the model domain |delta| < pi/2")]
    SteeringDomain(f64),

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("invalid randomization spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward cache is stale (cache generation {cache}, params generation {params})")]
    StaleCache { cache: u64, params: u64 },

    #[error("batch size mismatch: {envs} environments, {actions} actions")]
    BatchMismatch { envs: usize, actions: usize },

    #[error("training fault: {0}")]
    TrainingFault(String),

    #[error(
        "riccati iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    RiccatiNonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
