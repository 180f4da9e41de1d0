//! Subcommand implementations. Each returns a [`CliError`] carrying the
//! process exit code on failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bikelab_core::baselines::ControllerKind;
use bikelab_core::config::{resolve, Config, Layers};
use bikelab_core::eval::ablation::{run_ablation, AblationMatrix};
use bikelab_core::eval::report::{run_robustness, write_episode_csv, write_summary_csv};
use bikelab_core::eval::scenario::{robustness_matrix, ScenarioSpec};
use bikelab_core::eval::trace::{load_traces, save_traces};
use bikelab_core::eval::{evaluate, ControllerSpec, MetricsReport};
use bikelab_core::nn::checkpoint;
use bikelab_core::ppo::{Trainer, CURVE_WINDOW, CURVE_EPOCH_LIMIT, CURVE_LENGTH_TARGET};
use bikelab_core::Error;

use crate::live::{LiveConfig, LiveSim};
use crate::replay;
use crate::server;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.into(),
        }
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: m.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Checkpoint(_)
            | Error::InvalidParams(_)
            | Error::InvalidSpec(_)
            | Error::Trace(_)
            | Error::Csv(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Resolves the configuration layers and writes `resolved_config.toml`
/// into `out` when given.
pub fn load_config(layers: &Layers, out: Option<&Path>) -> CliResult<Config> {
    let cfg = resolve(layers)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved_config.toml"), cfg.to_toml()?)?;
    }
    Ok(cfg)
}

/// The controller named by `kind`; a policy needs a readable checkpoint.
pub fn controller(cfg: &Config, kind: ControllerKind, ckpt: Option<&Path>) -> CliResult<ControllerSpec> {
    Ok(match kind {
        ControllerKind::Policy => {
            let path = ckpt.ok_or_else(|| CliError::usage("--checkpoint is required for the policy controller"))?;
            let (policy, _) = checkpoint::load::<f32>(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            ControllerSpec::Policy(Arc::new(policy))
        }
        ControllerKind::Pid => ControllerSpec::Pid(cfg.baselines.pid),
        ControllerKind::Lqr => ControllerSpec::Lqr(cfg.baselines.lqr.clone()),
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Trains a policy; with `check`, a missed learning-curve target is exit 4.
pub fn train(cfg: &Config, out: &Path, check: bool) -> CliResult {
    let mut trainer = Trainer::new(cfg.ppo.clone(), cfg.env_config())?;
    let outcome = trainer.run(Some(out), |e| {
        tracing::info!(
            epoch = e.epoch,
            env_steps = e.env_steps,
            mean_episode_length = e.mean_episode_length.unwrap_or(0.0),
            mean_total_reward = e.mean_total_reward.unwrap_or(0.0),
            "epoch"
        );
    })?;
    let curve = outcome
        .log
        .curve_check(CURVE_LENGTH_TARGET, CURVE_EPOCH_LIMIT, CURVE_WINDOW);
    std::fs::write(
        out.join("curve_check.json"),
        serde_json::to_string_pretty(&curve).map_err(Error::from)?,
    )?;
    println!(
        "trained {} epochs; peak mean episode length {:.1}; final {:.1}; checkpoint {}",
        outcome.log.len(),
        curve.peak_length.unwrap_or(0.0),
        curve.final_length.unwrap_or(0.0),
        out.join("final.cyrl").display()
    );
    if check && !curve.passed() {
        return Err(CliError {
            code: EXIT_ACCEPTANCE,
            message: format!(
                "learning-curve target missed (reached: {:?}, monotone reward average: {})",
                curve.reached_epoch, curve.monotone
            ),
        });
    }
    Ok(())
}

fn print_report(r: &MetricsReport) {
    let s = r.summary();
    println!(
        "{} on {}: BSR {:.1}% over {} episodes",
        r.controller, r.scenario, s.bsr, r.episodes
    );
}

/// Evaluates one controller on one scenario and writes the report, the
/// traces and per-episode and summary tables.
pub fn eval(cfg: &Config, ctrl: &ControllerSpec, out: &Path) -> CliResult<MetricsReport> {
    let scenario = ScenarioSpec::by_name(&cfg.eval.scenario)?.with_episodes(cfg.eval.episodes);
    let (report, traces) = evaluate(ctrl, &scenario, &cfg.env_config(), cfg.eval.seed, &cfg.eval_options())?;
    report.save(&out.join("report.json"))?;
    save_traces(&out.join("traces.csv"), &traces)?;
    write_episode_csv(&traces, create(&out.join("episodes.csv"))?)?;
    write_summary_csv(std::slice::from_ref(&report), create(&out.join("summary.csv"))?)?;
    print_report(&report);
    Ok(report)
}

/// Evaluates one controller on every robustness scenario.
pub fn robustness(cfg: &Config, ctrl: &ControllerSpec, out: &Path) -> CliResult {
    let scenarios = robustness_matrix(cfg.eval.episodes);
    let rep = run_robustness(ctrl, &scenarios, &cfg.env_config(), cfg.eval.seed, &cfg.eval_options(), print_report)?;
    std::fs::write(
        out.join("robustness.json"),
        serde_json::to_string_pretty(&rep).map_err(Error::from)?,
    )?;
    write_summary_csv(&rep.rows, create(&out.join("robustness_summary.csv"))?)?;
    Ok(())
}

/// Trains and evaluates every variant of an ablation matrix.
pub fn ablate(cfg: &Config, matrix: AblationMatrix, out: &Path) -> CliResult {
    let table = run_ablation(matrix, &cfg.ppo, &cfg.env_config(), cfg.eval.episodes, |row| {
        println!(
            "{}: nominal BSR {:.1}%, randomized BSR {:.1}%",
            row.name, row.nominal.bsr, row.randomized.bsr
        )
    })?;
    std::fs::write(
        out.join("ablation.json"),
        serde_json::to_string_pretty(&table).map_err(Error::from)?,
    )?;
    table.write_delta_csv(create(&out.join("ablation_delta.csv"))?)?;
    let md = format!(
        "{}\n\n{}",
        table.format_markdown("nominal"),
        table.format_markdown("randomized")
    );
    std::fs::write(out.join("ablation.md"), md)?;
    Ok(())
}

/// Evaluates the classical baselines side by side.
pub fn baseline(cfg: &Config, kinds: &[ControllerKind], out: &Path) -> CliResult {
    let scenario = ScenarioSpec::by_name(&cfg.eval.scenario)?.with_episodes(cfg.eval.episodes);
    let mut reports = Vec::new();
    for &kind in kinds {
        let ctrl = controller(cfg, kind, None)?;
        let (r, traces) = evaluate(&ctrl, &scenario, &cfg.env_config(), cfg.eval.seed, &cfg.eval_options())?;
        r.save(&out.join(format!("report_{kind}.json")))?;
        save_traces(&out.join(format!("traces_{kind}.csv")), &traces)?;
        print_report(&r);
        reports.push(r);
    }
    write_summary_csv(&reports, create(&out.join("summary.csv"))?)?;
    Ok(())
}

pub struct ReplayArgs {
    pub trace: PathBuf,
    pub episode: Option<u64>,
    pub speed: f64,
    pub controller: String,
    pub stdout: bool,
}

/// Streams a trace file. A malformed file fails before anything is sent.
pub fn replay(cfg: &Config, args: &ReplayArgs) -> CliResult {
    if !(args.speed > 0.0) {
        return Err(CliError::usage("--speed must be positive"));
    }
    let mut traces = load_traces(&args.trace)?;
    if let Some(ep) = args.episode {
        traces.retain(|t| t.episode == ep);
        if traces.is_empty() {
            return Err(CliError::usage(format!("episode {ep} is not in the trace")));
        }
    }
    let stride = state_stride(cfg);
    let frames = replay::frames(&traces, &args.controller, stride);
    if args.stdout {
        return Ok(replay::to_writer(&frames, args.speed, std::io::stdout().lock())?);
    }
    let app = server::replay_router(frames, args.speed, &cfg.serve.static_dir);
    run_server(cfg, app)
}

fn state_stride(cfg: &Config) -> usize {
    (1.0 / (cfg.dynamics.control_dt * cfg.serve.state_hz)).ceil().max(1.0) as usize
}

/// Runs the live simulation service.
pub fn serve(cfg: &Config) -> CliResult {
    let policy = match &cfg.serve.checkpoint {
        Some(p) => Some(Arc::new(
            checkpoint::load::<f32>(p)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
                .0,
        )),
        None => None,
    };
    let live = LiveConfig {
        base: cfg.env_config(),
        pid: cfg.baselines.pid,
        lqr: cfg.baselines.lqr.clone(),
        policy,
        controller: cfg.serve.controller,
        scenario: cfg.serve.scenario.clone(),
        v_cmd: cfg.serve.v_cmd,
        delta_cmd_deg: cfg.serve.delta_cmd_deg,
        state_hz: cfg.serve.state_hz,
        fall_reset_s: cfg.serve.fall_reset_s,
        seed: cfg.serve.seed,
    };
    // Fail on a bad scenario or missing checkpoint before binding.
    LiveSim::new(live.clone())?;
    runtime()?.block_on(async {
        let app = server::live_router(LiveSim::new(live)?, &cfg.serve.static_dir);
        bind_and_serve(cfg, app).await
    })
}

fn run_server(cfg: &Config, app: axum::Router) -> CliResult {
    runtime()?.block_on(bind_and_serve(cfg, app))
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn bind_and_serve(cfg: &Config, app: axum::Router) -> CliResult {
    let addr = format!("{}:{}", cfg.serve.host, cfg.serve.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| CliError::runtime(format!("bind {addr}: {e}")))?;
    println!("listening on http://{}", listener.local_addr()?);
    server::serve(listener, app).await?;
    Ok(())
}
