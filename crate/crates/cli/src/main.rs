mod commands;
mod options;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use options::{BenchArgs, BiasArgs, ConvergenceArgs, DumpConfigArgs, SampleCheckArgs};

/// Kernel-based sampled softmax: sampling self-checks, bias and convergence
/// experiments, and tree benchmarks. Results are written as CSV.
///
/// Exit status is 0 on success, 1 for invalid arguments or configuration,
/// and 2 when a run fails (including a failed self-check).
#[derive(Debug, Parser)]
#[command(name = "ksmp", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw from a sampling tree over random embeddings and run a
    /// chi-square test against the exact kernel distribution.
    SampleCheck(SampleCheckArgs),
    /// Final eval loss for every sampler, sample size and seed.
    Bias(BiasArgs),
    /// Per-epoch eval loss for every sampler at one sample size.
    Convergence(ConvergenceArgs),
    /// Per-draw visit counts and timings of the sampling tree.
    Bench(BenchArgs),
    /// Print the effective experiment configuration as key=value lines.
    DumpConfig(DumpConfigArgs),
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

impl From<ksmp::Error> for Failure {
    fn from(e: ksmp::Error) -> Self {
        if e.is_invalid_input() {
            Failure::invalid(e)
        } else {
            Failure::runtime(e)
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::SampleCheck(args) => commands::sample_check(args),
        Command::Bias(args) => commands::bias(args),
        Command::Convergence(args) => commands::convergence(args),
        Command::Bench(args) => commands::bench(args),
        Command::DumpConfig(args) => commands::dump_config(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
