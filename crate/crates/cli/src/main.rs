use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polar_cli::analyze::AnalyzeArgs;
use polar_cli::bench::BenchArgs;
use polar_cli::factorize::FactorizeArgs;
use polar_cli::finetune::FinetuneArgs;
use polar_cli::{analyze, bench, factorize, finetune, CliError, GlobalArgs, Outcome};

/// Exit codes: 0 when every run reached its target, 2 when a run exhausted
/// its budget (or a benchmark cell never stabilized), 1 on error.
#[derive(Parser)]
#[command(
    name = "polar",
    version,
    about = "Polar low-rank factorization experiments"
)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a synthetic low-rank target with RGD or plain GD.
    Factorize(FactorizeArgs),
    /// Train polar and plain adapters on a whitened linear task.
    FinetuneToy(FinetuneArgs),
    /// Spectra, row-direction distances and feasibility curves.
    Analyze(AnalyzeArgs),
    /// Time one landing step against one retraction step.
    Bench(BenchArgs),
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let g = &cli.globals;
    Ok(match &cli.command {
        Command::Factorize(a) => factorize::execute(&factorize::settings(g, a)?)?.0,
        Command::FinetuneToy(a) => finetune::execute(&finetune::settings(g, a)?)?.0,
        Command::Analyze(a) => analyze::execute(&analyze::settings(g, a)?, &a.paths)?.0,
        Command::Bench(a) => bench::execute(&bench::settings(g, a)?)?.0,
    })
}

fn main() -> ExitCode {
    // clap's own usage errors exit with 2, which is reserved for stalls here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
