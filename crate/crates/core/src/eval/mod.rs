//! Evaluation harness: metric definitions over traces, scenario execution,
//! the robustness matrix, ablations and reports.

pub mod ablation;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod trace;

pub use metrics::{MeanStd, TrackingErrors};
pub use report::{evaluate, EvalOptions, MetricsReport, RobustnessReport};
pub use runner::{run_episode_batch, Axis, ControllerSpec, Threshold};
pub use scenario::ScenarioSpec;
pub use trace::{Trace, TraceStep};
