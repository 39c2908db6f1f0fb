//! `hmmq`: train, evaluate, and report on online HMM-estimation-based
//! Q-learning runs for finite POMDPs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hmmq_cli::config::{expand_config, load_config, preset_document, RunConfig};
use hmmq_cli::metrics::{read_metrics, MetricsWriter};
use hmmq_cli::report::emit_report;
use hmmq_cli::runner::{final_checkpoint_path, run_eval, run_train};

#[derive(Parser)]
#[command(name = "hmmq", version, about = "Online HMM-estimation-based Q-learning for finite POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the three concurrent estimators on a simulated trajectory.
    Train(RunArgs),
    /// Evaluate the three policy classes from a saved checkpoint.
    Eval(EvalArgs),
    /// Write plot-ready series files and the Q comparison for a run.
    Report {
        /// Run directory holding metrics.csv (and checkpoint_final.txt).
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a configuration file and print its expanded form.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration preset (paper-s4).
    #[arg(long)]
    preset: Option<String>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of training steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the joint-transition update mode.
    #[arg(long, value_enum)]
    t_mode: Option<TModeArg>,
    /// Override the reward/action pairing of the Q and T updates.
    #[arg(long, value_enum)]
    q_timing: Option<QTimingArg>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint to evaluate; defaults to <out>/checkpoint_final.txt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TModeArg {
    Averaging,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum QTimingArg {
    Alg1,
    Eq14,
}

fn resolve_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => expand_config(preset_document(name)?)?,
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
        (None, None) => bail!("one of --config or --preset is required"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        if steps == 0 {
            bail!("--steps must be at least 1");
        }
        config.steps = steps;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(mode) = args.t_mode {
        config.t_mode = match mode {
            TModeArg::Averaging => hmmq_core::estim::TransitionUpdateMode::Averaging,
            TModeArg::Literal => hmmq_core::estim::TransitionUpdateMode::Literal,
        };
    }
    if let Some(timing) = args.q_timing {
        config.q_timing = match timing {
            QTimingArg::Alg1 => hmmq_core::estim::QTiming::Lagged,
            QTimingArg::Eq14 => hmmq_core::estim::QTiming::Immediate,
        };
    }
    Ok(config)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let config = resolve_config(&args)?;
            let outcome = run_train(&config).context("training run failed")?;
            println!(
                "trained {} steps (seed {}): sigma = {:.4}, guard events = {}",
                outcome.final_step, config.seed, outcome.final_sigma, outcome.guard_events
            );
            println!("metrics:    {}", outcome.metrics_path.display());
            println!("checkpoint: {}", outcome.checkpoint_path.display());
        }
        Command::Eval(args) => {
            let config = resolve_config(&args.run)?;
            let checkpoint = args
                .checkpoint
                .unwrap_or_else(|| final_checkpoint_path(&config.out_dir));
            let row = run_eval(&config, &checkpoint)
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            let eval = row.eval.expect("eval row carries rewards");
            println!(
                "step {}: mean reward full = {:.4}, hmm = {:.4}, partial = {:.4}",
                row.step, eval.full, eval.belief, eval.partial
            );
            append_eval_row(&config, &row)?;
        }
        Command::Report { out } => {
            let summary = emit_report(&out).context("report generation failed")?;
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "report over {} rows ({} with evaluations) written to {}",
                summary.rows,
                summary.eval_rows,
                out.display()
            );
            if let Some(dev) = summary.q_deviation {
                println!("relabeled Q deviation vs fully observed learner: {dev:.2}");
            }
        }
        Command::ValidateConfig { config } => {
            let config = load_config(&config)?;
            print!("{}", config.to_toml_string());
        }
    }
    Ok(())
}

/// Appends the evaluation row to `<out>/metrics_eval.csv`, keeping that
/// file's steps strictly increasing; re-evaluations of an already-logged
/// step are reported but not appended.
fn append_eval_row(config: &RunConfig, row: &hmmq_cli::metrics::MetricsRow) -> anyhow::Result<()> {
    let path = config.out_dir.join("metrics_eval.csv");
    let mut writer = if path.exists() {
        let existing = read_metrics(&path)?;
        if existing.last().is_some_and(|last| last.step >= row.step) {
            eprintln!(
                "note: step {} already logged in {}; not appending",
                row.step,
                path.display()
            );
            return Ok(());
        }
        MetricsWriter::open_append(&path)?
    } else {
        std::fs::create_dir_all(&config.out_dir)
            .with_context(|| format!("creating {}", config.out_dir.display()))?;
        MetricsWriter::create(&path)?
    };
    writer.write_row(row)?;
    Ok(())
}
