use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qudit_cli::{check, commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "qudit",
    version,
    about = "Robust gate design, simulated process tomography and phase retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a control ramp for the target gate.
    Design(RunArgs),
    /// Infidelity of the configured ramp over a range of depths.
    Sweep(RunArgs),
    /// Simulated process tomography of the configured gate.
    Sqpt(RunArgs),
    /// Relative-phase retrieval table.
    Phase(RunArgs),
    /// Ramp and spectrum tables for an existing coefficients file.
    ExportRamp(RunArgs),
    /// Runs the invariant suite on an artifact.
    Check {
        artifact: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

type Handler = fn(&RunConfig, &std::path::Path) -> Result<serde_json::Value, CliError>;

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let (args, f): (RunArgs, Handler) = match cli.command {
        Command::Check { artifact, threads } => {
            init_threads(threads)?;
            let report = check::check(&artifact)?;
            let v = serde_json::to_value(&report)?;
            if !report.passed {
                println!("{}", serde_json::to_string_pretty(&v)?);
                return Err(CliError::Check(format!(
                    "{} failed its invariant checks",
                    artifact.display()
                )));
            }
            return Ok(v);
        }
        Command::Design(a) => (a, commands::design),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Sqpt(a) => (a, commands::sqpt),
        Command::Phase(a) => (a, commands::phase),
        Command::ExportRamp(a) => (a, commands::export_ramp),
    };
    init_threads(args.threads)?;
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg = cfg.with_seed(s);
    }
    let out = args.out.unwrap_or_else(|| cfg.output.dir.clone());
    f(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
