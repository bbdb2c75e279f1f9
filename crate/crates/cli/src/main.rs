mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::exit::{exit_code, Exit};

/// Kantorovich regression for distributional responses.
#[derive(Debug, Parser)]
#[command(name = "kr", version, about)]
struct Cli {
    /// Worker threads for the data-parallel kernels (0 = all cores).
    #[arg(long, global = true, env = "KR_THREADS", default_value_t = 0)]
    threads: usize,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a dataset manifest.
    Fit(commands::fit::FitArgs),
    /// Predict a response density from new predictors.
    Predict(commands::predict::PredictArgs),
    /// Report the feasibility constants of a dataset.
    Check(ManifestArg),
    /// Wasserstein barycenter of a list of densities.
    Barycenter(commands::barycenter::BarycenterArgs),
    /// Generate a synthetic dataset with known truth.
    Synth(commands::synth::SynthArgs),
    /// Log L2 recovery error against log n on synthetic data.
    Convergence(commands::synth::ConvergenceArgs),
    /// Panel data for the illustrative figures.
    Demo(commands::demo::DemoArgs),
}

#[derive(Debug, Args)]
struct ManifestArg {
    /// Dataset manifest (JSON).
    manifest: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        log::warn!("built without the parallel feature; --threads {threads} ignored");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads(cli.threads);
    let result = match cli.command {
        Command::Fit(a) => commands::fit::run(&a),
        Command::Predict(a) => commands::predict::run(&a),
        Command::Check(a) => commands::check::run(&a.manifest, a.json.as_deref()),
        Command::Barycenter(a) => commands::barycenter::run(&a),
        Command::Synth(a) => commands::synth::run_synth(&a, cli.seed),
        Command::Convergence(a) => commands::synth::run_convergence(&a, cli.seed),
        Command::Demo(a) => commands::demo::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
