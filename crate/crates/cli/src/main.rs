//! bcfbench command line: fit, benchmark, test, simulate and report.

mod benchmark;
mod common;
mod fit;
mod report;
mod simulate;
mod system;

use clap::{Parser, Subcommand};
use common::CliError;

#[derive(Parser)]
#[command(name = "bcfbench", version, about = "Bath correlation fits, exact oscillator benchmarks and HEOM error tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an exponential model to a bath correlation function
    Fit(fit::FitArgs),
    /// Exact equilibrium moments and spectra of a damped oscillator
    Benchmark(benchmark::BenchmarkArgs),
    /// Surrogate-oscillator error test of one model or a K sweep
    Test(test::TestArgs),
    /// HEOM dynamics or steady states of a target system
    Simulate(simulate::SimulateArgs),
    /// Join surrogate and target sweeps by K
    Report(report::ReportArgs),
    /// Write one of the built-in model systems as a system file
    System(system::SystemArgs),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BCFBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("BCFBENCH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Benchmark(a) => benchmark::run(a),
        Command::Test(a) => test::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
        Command::System(a) => system::run(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
