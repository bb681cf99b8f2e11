//! `convctx` command line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 training divergence.

mod commands;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Conversational-context emotion classification experiments.
#[derive(Parser, Debug)]
#[command(name = "convctx", version, about)]
struct Cli {
    /// Output root for run directories (defaults to the config's `out_dir`,
    /// then `$CONVCTX_OUT`, then `./runs`).
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,

    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its Bayes-oracle report.
    Synth(SynthArgs),
    /// Per-class corpus statistics as CSV.
    Stats(CorpusArgs),
    /// Emotion transition matrix between adjacent segments as CSV.
    Transitions(TransitionArgs),
    /// Inter-segment gap histograms (both directions) as CSV.
    Gaps(GapArgs),
    /// Cross-validated training with the configured context policy.
    Train(RunArgs),
    /// Token-window sweep.
    Sweep(RunArgs),
    /// Hierarchical two-phase training with a no-context control.
    Hier(RunArgs),
    /// Pool prediction files and write an evaluation report.
    Eval(EvalArgs),
    /// Rewrite the report files of an existing run directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator spec (TOML); defaults to the built-in spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_dialogues: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus file to write; the oracle report goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransitionArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Rows with fewer outgoing transitions are excluded.
    #[arg(long, default_value_t = 1)]
    min_count: u64,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    bin_width: f64,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Folds trained in parallel (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction set files (JSON) to pool.
    #[arg(long, required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Corpus for the conditional analysis.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<convctx::Error>() {
        Some(convctx::Error::Divergence { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let ctx = commands::Context {
        out_root: cli.out_root,
        verbose: cli.verbose,
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a.spec.as_deref(), a.n_dialogues, a.seed, &a.out),
        Command::Stats(a) => commands::stats(&a.corpus, &a.out),
        Command::Transitions(a) => commands::transitions(&a.corpus, &a.out, a.min_count),
        Command::Gaps(a) => commands::gaps(&a.corpus, &a.out, a.bin_width),
        Command::Train(a) => commands::run(&ctx, commands::Kind::Train, &a.config, a.seed, a.jobs),
        Command::Sweep(a) => commands::run(&ctx, commands::Kind::Sweep, &a.config, a.seed, a.jobs),
        Command::Hier(a) => commands::run(&ctx, commands::Kind::Hier, &a.config, a.seed, a.jobs),
        Command::Eval(a) => commands::eval(&a.predictions, a.corpus.as_deref(), &a.out),
        Command::Report(a) => commands::report(&a.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
