//! `graphdiff` — train, sample and evaluate graph diffusion models.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use graphdiff::commands::{self, EmOptions, EvalReport, InferRequest, ReasonRow, CHECKPOINT_FILE};
use graphdiff::config::{Overrides, RunConfig};
use graphdiff::diffusion::InferenceMode;
use graphdiff::metrics::format_sig;

#[derive(Parser)]
#[command(name = "graphdiff", version, about = "Diffusion models for graph-structured prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fully supervised training on an inductive dataset
    Train(RunArgs),
    /// Semi-supervised EM on a partially labeled graph
    Em {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint of the same configuration
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many EM rounds (the checkpoint stays resumable)
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Run the reverse chain of a trained node denoiser
    Infer {
        #[command(flatten)]
        target: CheckpointArgs,
        /// Graph file or dataset directory; defaults to the run's test data
        #[arg(long)]
        graph: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Train and evaluate an algorithmic-reasoning model
    Reason(RunArgs),
    /// Recompute the metrics of a checkpoint
    Eval {
        #[command(flatten)]
        target: CheckpointArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the dataset a configuration describes
    GenData(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct CheckpointArgs {
    /// Checkpoint file; defaults to the one in the configuration's output directory
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling temperature of stochastic inference
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of reverse chains combined by majority vote
    #[arg(long)]
    samples: Option<usize>,
    /// Number of diffusion steps T
    #[arg(long = "steps", value_name = "T")]
    steps: Option<usize>,
    #[arg(long, value_name = "true|false")]
    unweighted_mse: Option<bool>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Deterministic,
    Stochastic,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            lambda: self.lambda,
            samples: self.samples,
            steps: self.steps,
            unweighted_mse: self.unweighted_mse,
            mode: self.mode.map(|m| match m {
                Mode::Deterministic => InferenceMode::Deterministic,
                Mode::Stochastic => InferenceMode::Stochastic,
            }),
        }
    }
}

fn load_config(path: &Path, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&flags.overrides());
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_path(args: &CheckpointArgs, flags: &Flags) -> Result<PathBuf> {
    match (&args.checkpoint, &args.config) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(c)) => Ok(load_config(c, flags)?.out_dir()?.join(CHECKPOINT_FILE)),
        (None, None) => Err(graphdiff::Error::Config("pass --checkpoint or --config".into()).into()),
    }
}

fn print_rows(rows: &[ReasonRow]) {
    for r in rows {
        println!(
            "{} (n = {}): mse {} | mean baseline {} | zero baseline {}",
            r.split,
            r.num_nodes,
            format_sig(r.mse),
            format_sig(r.mean_baseline_mse),
            format_sig(r.zero_baseline_mse)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = load_config(&a.config, &a.flags)?;
            let m = commands::cmd_train(&cfg)?;
            println!(
                "test: node accuracy {} | graph accuracy {} | micro-F1 {}",
                format_sig(m.node_accuracy),
                format_sig(m.graph_accuracy),
                format_sig(m.micro_f1)
            );
        }
        Command::Em { run, resume, stop_after } => {
            let cfg = load_config(&run.config, &run.flags)?;
            let m = commands::cmd_em(&cfg, &EmOptions { resume, stop_after })?;
            println!(
                "after {} rounds: em accuracy {} | mean-field accuracy {}",
                m.rounds,
                format_sig(m.em_accuracy),
                format_sig(m.meanfield_accuracy)
            );
        }
        Command::Infer { target, graph, flags } => {
            let checkpoint = checkpoint_path(&target, &flags)?;
            let out = flags.out.clone().unwrap_or_else(|| checkpoint.with_file_name("infer"));
            let report = commands::cmd_infer(&InferRequest {
                checkpoint,
                graph,
                out: out.clone(),
                overrides: flags.overrides(),
            })?;
            match report.metrics {
                Some(m) => println!(
                    "node accuracy {} | graph accuracy {} | written to {}",
                    format_sig(m.node_accuracy),
                    format_sig(m.graph_accuracy),
                    out.display()
                ),
                None => println!("{} predictions written to {}", report.predictions.len(), out.display()),
            }
        }
        Command::Reason(a) => {
            let cfg = load_config(&a.config, &a.flags)?;
            print_rows(&commands::cmd_reason(&cfg)?);
        }
        Command::Eval { target, out } => {
            let flags = Flags { out: out.clone(), ..Default::default() };
            let checkpoint = checkpoint_path(&target, &flags)?;
            let out = out.unwrap_or_else(|| checkpoint.with_file_name("eval"));
            match commands::cmd_eval(&checkpoint, &out)? {
                EvalReport::Supervised(m) => println!(
                    "test: node accuracy {} | graph accuracy {} | micro-F1 {}",
                    format_sig(m.node_accuracy),
                    format_sig(m.graph_accuracy),
                    format_sig(m.micro_f1)
                ),
                EvalReport::Em(m) => println!(
                    "em accuracy {} | mean-field accuracy {}",
                    format_sig(m.em_accuracy),
                    format_sig(m.meanfield_accuracy)
                ),
                EvalReport::Reasoning(rows) => print_rows(&rows),
            }
        }
        Command::GenData(a) => {
            let cfg = load_config(&a.config, &a.flags)?;
            let manifest = commands::cmd_gen_data(&cfg).context("generating data")?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(|e| e.downcast_ref::<graphdiff::Error>()).map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
