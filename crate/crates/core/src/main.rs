use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collidesim::cli::{self, Overrides};
use collidesim::validation;
use collidesim::Error;

/// Exit code when one or more validation criteria fail.
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "collidesim", version, about = "Collision-model simulation of open quantum systems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file (`.json` or `key = value` text)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// trotter1, trotter2k:<k>, qdrift, salcu or exact
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the observable and append to report.csv
    Run,
    /// Exact Lindblad and collision values, written to oracle.csv
    Oracle,
    /// Circuit resources per backend, written to resources.csv
    Resources,
    /// Sweep one parameter, written to sweep_<axis>.csv
    Sweep {
        /// eps, t, nu or p
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values
        #[arg(long)]
        values: Option<String>,
    },
    /// Run the built-in acceptance checks
    Validate {
        /// Comma-separated criterion ids (default: all)
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

fn run(cli: Cli) -> Result<u8, Error> {
    let g = cli.global;
    let mut ov = Overrides { seed: g.seed, workers: g.workers, out: g.out, backend: g.backend, ..Default::default() };
    if let Command::Sweep { axis, values } = &cli.command {
        ov.axis = axis.clone();
        ov.values = values.clone();
    }
    if let Command::Validate { criteria } = &cli.command {
        let ids: Vec<u8> =
            if criteria.is_empty() { validation::CRITERIA.iter().map(|c| c.0).collect() } else { criteria.clone() };
        let mut failed = false;
        for id in ids {
            let res = validation::run_criterion(id)
                .ok_or_else(|| Error::Config(format!("unknown criterion {id} (1-{})", validation::CRITERIA.len())))?;
            println!("{res}");
            failed |= !res.passed;
        }
        return Ok(if failed { EXIT_VALIDATION } else { 0 });
    }
    let cfg = cli::load_config(g.config.as_deref(), &ov)?;
    match cli.command {
        Command::Run => {
            let out = cli::cmd_run(&cfg)?;
            eprintln!("{}", out.summary);
            println!("{}", out.report_path.display());
        }
        Command::Oracle => {
            let (_, path) = cli::cmd_oracle(&cfg)?;
            println!("{}", path.display());
        }
        Command::Resources => {
            let (_, path) = cli::cmd_resources(&cfg)?;
            println!("{}", path.display());
        }
        Command::Sweep { .. } => {
            let axis = cfg.sweep_axis.ok_or_else(|| Error::Config("sweep needs --axis or sweep.axis".into()))?;
            let (_, path) = cli::cmd_sweep(&cfg, axis, &cfg.sweep_values)?;
            println!("{}", path.display());
        }
        Command::Validate { .. } => unreachable!("handled above"),
    }
    Ok(0)
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
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
