use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bbqram::FixedPointFormat;
use bbqram_cli::commands::ERROR_EXIT;
use bbqram_cli::suite::DEFAULT_SIZES;
use bbqram_cli::{cmd_prepare, cmd_suite, cmd_trace, InputFormat, Mode, Outcome, RunManifest};
use clap::{Args, Parser, Subcommand};

/// Amplitude-encoding state preparation on a simulated bucket-brigade QRAM.
///
/// Exit codes: 0 success, 1 input, overflow or I/O error, 2 failed
/// verification or suite criterion.
#[derive(Parser, Debug)]
#[command(name = "bbqram", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepare the state for a matrix and write amplitudes and costs.
    Prepare(PrepArgs),
    /// Like prepare, and dump the register state after every split.
    Trace {
        #[command(flatten)]
        prep: PrepArgs,
        /// Trace JSON destination (stdout if omitted).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run the seeded self-check suite.
    Suite(SuiteArgs),
}

#[derive(Args, Debug)]
struct PrepArgs {
    /// Matrix file (CSV rows or {"rows","cols","data"} JSON).
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    #[arg(long, default_value_t = 16)]
    int_bits: u32,
    #[arg(long, default_value_t = 16)]
    frac_bits: u32,
    /// Amplitudes JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cost report JSON destination.
    #[arg(long)]
    cost_out: Option<PathBuf>,
    /// Compare against a / ||A||_F and exit 2 on mismatch.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    #[arg(long)]
    seed: u64,
    /// Entry counts of the random matrices, comma separated powers of two.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
    sizes: Vec<usize>,
    /// Summary JSON destination (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PrepArgs {
    fn manifest(self) -> Result<RunManifest> {
        Ok(RunManifest {
            input: Some(self.input),
            format: self.format,
            mode: self.mode,
            fixed: FixedPointFormat::new(self.int_bits, self.frac_bits)?,
            out: self.out,
            cost_out: self.cost_out,
            verify: self.verify,
            tol: self.tol,
            ..RunManifest::default()
        })
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Prepare(args) => cmd_prepare(&args.manifest()?),
        Command::Trace { prep, trace_out } => {
            let manifest = RunManifest {
                trace_out,
                ..prep.manifest()?
            };
            cmd_trace(&manifest)
        }
        Command::Suite(args) => cmd_suite(&RunManifest {
            seed: Some(args.seed),
            sizes: args.sizes,
            out: args.out,
            ..RunManifest::default()
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(ERROR_EXIT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}
