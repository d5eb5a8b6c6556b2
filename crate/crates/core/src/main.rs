use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bounded_alloc::diagnostics::theoretical_bounds;
use bounded_alloc::harness::{output, run_experiment, sweep, ExperimentConfig, Grid, Scale, Settings};
use bounded_alloc::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "bounded-alloc", version, about = "Balls into bins with k choices and an m-bit memory budget")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write per-trial CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=value` settings applied over the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of configurations and write one summary row per cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks.
    Verify {
        /// Reduced trial counts.
        #[arg(long)]
        quick: bool,
    },
    /// Print the asymptotic load bounds for (n, k, m).
    Bounds {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        m: u64,
    },
}

fn output_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_settings(path: &Path, overrides: &[String]) -> Result<Settings, Error> {
    let mut settings = Settings::from_file(path)?;
    for o in overrides {
        settings.apply_override(o)?;
    }
    Ok(settings)
}

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { config, overrides, out } => {
            let config = ExperimentConfig::from_settings(&load_settings(&config, &overrides)?)?;
            let experiment = run_experiment(&config)?;
            output::write_trials(output_sink(&out)?, &config, &experiment.records)?;
            let s = &experiment.summary;
            log::info!(
                "{} trials, failure rate {}, max load mean {:.3}",
                s.trials,
                s.failure_rate,
                s.max_load.mean
            );
            Ok(0)
        }
        Command::Sweep { config, grid, overrides, out } => {
            let settings = load_settings(&config, &overrides)?;
            let grid = Grid::from_file(&grid)?;
            let rows = sweep(&settings, &grid).map_err(|e| match e {
                Error::InvalidParameter(msg) => Error::Config(msg),
                other => other,
            })?;
            let trials = settings
                .get("run.trials")
                .and_then(|v| bounded_alloc::harness::config::parse_integer(v).ok())
                .unwrap_or(bounded_alloc::harness::config::DEFAULT_TRIALS);
            let seed = settings
                .get("run.base_seed")
                .and_then(|v| bounded_alloc::harness::config::parse_integer(v).ok())
                .unwrap_or(bounded_alloc::harness::config::DEFAULT_BASE_SEED);
            output::write_summary(output_sink(&out)?, trials, seed, &rows)?;
            Ok(0)
        }
        Command::Verify { quick } => {
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let mut failed = 0;
            for check in bounded_alloc::harness::verify::CHECKS {
                let result = check(scale);
                println!("{result}");
                failed += (!result.pass) as u32;
            }
            println!("{failed} check(s) failed");
            Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Bounds { n, k, m } => {
            if n == 0 || k == 0 || m == 0 {
                return Err(Error::Config("n, k and m must be at least 1".into()));
            }
            print!("{}", theoretical_bounds(n, k, m));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
                _ => EXIT_CHECK_FAILED,
            })
        }
    }
}
