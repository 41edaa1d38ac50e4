use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qshuffle::protocol::Backend;
use qshuffle_cli::experiment::{run_experiment, write_report, ExperimentSpec, OutputFormat};
use qshuffle_cli::verify::verify_suite;
use qshuffle_cli::CliError;

#[derive(Parser)]
#[command(name = "qshuffle", version, about = "Shuffle-model DP over qudit GHZ states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run protocol trials and write trial records, a summary and histograms.
    Run(RunArgs),
    /// Run every acceptance check and print one line per criterion.
    Verify,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    kappa: u64,
    /// Defaults to the smallest prime above (kappa-1)n.
    #[arg(long)]
    d: Option<u64>,
    #[arg(long, conflicts_with = "gamma")]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Comma-separated list of statevector, tableau, analytic.
    #[arg(long, default_value = "statevector")]
    backend: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// jsonl or json.
    #[arg(long, default_value = "jsonl")]
    format: String,
    /// Record wall-clock nanoseconds per trial.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn into_spec(self) -> Result<ExperimentSpec, CliError> {
        let backends = self
            .backend
            .split(',')
            .map(|s| s.trim().parse::<Backend>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentSpec {
            n: self.n,
            kappa: self.kappa,
            d: self.d,
            epsilon: self.epsilon,
            gamma: self.gamma,
            trials: self.trials,
            backends,
            seed: self.seed,
            out: self.out,
            format: self.format.parse::<OutputFormat>()?,
            timing: self.timing,
        })
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let spec = args.into_spec()?;
    let report = run_experiment(&spec)?;
    for path in write_report(&report, &spec.out, spec.format)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Verify => {
            let results = verify_suite();
            for r in &results {
                println!("{r}");
            }
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
