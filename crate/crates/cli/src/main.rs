use std::path::PathBuf;
use std::process::ExitCode;

use bikelab_cli::commands::{self, CliError, CliResult, ReplayArgs};
use bikelab_core::baselines::ControllerKind;
use bikelab_core::config::Layers;
use bikelab_core::eval::ablation::AblationMatrix;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bikelab", version, about = "Bicycle balance laboratory")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Built-in parameter set: desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// TOML file layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Out {
    /// Output directory for artifacts and the resolved configuration.
    #[arg(long, default_value = "runs/out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Skip the recovery trials.
    #[arg(long)]
    no_recovery: bool,
    /// Skip the threshold searches.
    #[arg(long)]
    no_thresholds: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy with PPO.
    Train {
        #[command(flatten)]
        out: Out,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Exit 4 when the learning-curve target is missed.
        #[arg(long)]
        check: bool,
    },
    /// Evaluate one controller on one scenario.
    Eval {
        #[command(flatten)]
        out: Out,
        #[arg(long, default_value = "policy")]
        controller: ControllerKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Evaluate one controller across the robustness matrix.
    Robustness {
        #[command(flatten)]
        out: Out,
        #[arg(long, default_value = "policy")]
        controller: ControllerKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Train and evaluate the reward or randomization ablation.
    Ablate {
        #[command(flatten)]
        out: Out,
        #[arg(long, default_value = "reward")]
        matrix: AblationMatrix,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        eval_episodes: Option<usize>,
    },
    /// Evaluate the PID and LQR baselines.
    Baseline {
        #[command(flatten)]
        out: Out,
        /// Only this baseline (pid or lqr).
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Stream a recorded trace over the websocket or to stdout.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        episode: Option<u64>,
        /// Playback speed multiplier.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Controller label attached to the state messages.
        #[arg(long, default_value = "replay")]
        controller: String,
        /// Print JSON lines instead of serving.
        #[arg(long)]
        stdout: bool,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Run the live simulation service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn set(o: &mut Vec<String>, key: &str, v: Option<impl ToString>) {
    if let Some(v) = v {
        o.push(format!("{key}={}", v.to_string()));
    }
}

fn quoted(p: &std::path::Path) -> String {
    format!("{:?}", p.display().to_string())
}

impl EvalFlags {
    fn apply(&self, o: &mut Vec<String>) {
        set(o, "eval.scenario", self.scenario.as_ref().map(|s| format!("{s:?}")));
        set(o, "eval.episodes", self.episodes);
        set(o, "eval.seed", self.seed);
        set(o, "eval.workers", self.workers);
        if self.no_recovery {
            o.push("eval.recovery=false".into());
        }
        if self.no_thresholds {
            o.push("eval.thresholds=false".into());
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let mut layers = Layers {
        preset: cli.common.preset,
        file: cli.common.config,
        overrides: Vec::new(),
        env: Vec::new(),
    }
    .with_process_env();
    let o = &mut layers.overrides;
    match &cli.cmd {
        Cmd::Train {
            epochs, seed, workers, ..
        } => {
            set(o, "ppo.epochs", *epochs);
            set(o, "ppo.seed", *seed);
            set(o, "ppo.workers", *workers);
        }
        Cmd::Eval { eval, .. } | Cmd::Robustness { eval, .. } | Cmd::Baseline { eval, .. } => eval.apply(o),
        Cmd::Ablate {
            epochs, eval_episodes, ..
        } => {
            set(o, "ppo.epochs", *epochs);
            set(o, "eval.episodes", *eval_episodes);
        }
        Cmd::Replay { port, .. } => set(o, "serve.port", *port),
        Cmd::Serve {
            host,
            port,
            controller,
            checkpoint,
            static_dir,
        } => {
            set(o, "serve.host", host.as_ref().map(|h| format!("{h:?}")));
            set(o, "serve.port", *port);
            set(o, "serve.controller", controller.map(|c| format!("\"{c}\"")));
            set(o, "serve.checkpoint", checkpoint.as_deref().map(quoted));
            set(o, "serve.static_dir", static_dir.as_deref().map(quoted));
        }
    }
    // The user's own --set flags win over the convenience flags.
    layers.overrides.extend(cli.common.overrides);

    match cli.cmd {
        Cmd::Train { out, check, .. } => {
            let cfg = commands::load_config(&layers, Some(&out.out))?;
            commands::train(&cfg, &out.out, check)
        }
        Cmd::Eval {
            out,
            controller,
            checkpoint,
            ..
        } => {
            let cfg = commands::load_config(&layers, Some(&out.out))?;
            let ctrl = commands::controller(&cfg, controller, checkpoint.as_deref())?;
            commands::eval(&cfg, &ctrl, &out.out).map(|_| ())
        }
        Cmd::Robustness {
            out,
            controller,
            checkpoint,
            ..
        } => {
            let cfg = commands::load_config(&layers, Some(&out.out))?;
            let ctrl = commands::controller(&cfg, controller, checkpoint.as_deref())?;
            commands::robustness(&cfg, &ctrl, &out.out)
        }
        Cmd::Ablate { out, matrix, .. } => {
            let cfg = commands::load_config(&layers, Some(&out.out))?;
            commands::ablate(&cfg, matrix, &out.out)
        }
        Cmd::Baseline { out, controller, .. } => {
            let kinds = match controller {
                None => vec![ControllerKind::Pid, ControllerKind::Lqr],
                Some(ControllerKind::Policy) => {
                    return Err(CliError::usage("baseline takes pid or lqr; use eval for the policy"))
                }
                Some(k) => vec![k],
            };
            let cfg = commands::load_config(&layers, Some(&out.out))?;
            commands::baseline(&cfg, &kinds, &out.out)
        }
        Cmd::Replay {
            trace,
            episode,
            speed,
            controller,
            stdout,
            ..
        } => {
            let cfg = commands::load_config(&layers, None)?;
            commands::replay(
                &cfg,
                &ReplayArgs {
                    trace,
                    episode,
                    speed,
                    controller,
                    stdout,
                },
            )
        }
        Cmd::Serve { .. } => {
            let cfg = commands::load_config(&layers, None)?;
            commands::serve(&cfg)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
