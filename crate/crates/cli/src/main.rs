mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bdsg::experiments::Axis;
use bdsg::scenarios::Method;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bdsg", version, about = "Bloch-decomposition stochastic Galerkin experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for band tables and reference solutions.
    #[arg(long, global = true, default_value = ".bdsg-cache")]
    cache_dir: PathBuf,
    /// Recompute everything instead of using the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Allow scenarios marked heavy.
    #[arg(long, global = true)]
    heavy: bool,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bloch bands of the scenario's lattice: bands.csv plus a cache entry.
    Bands {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// One solve: run.json, mean_field.csv, mean_density.csv, conserved.csv.
    Run {
        scenario: String,
        #[arg(long, default_value = "bdsg", value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence sweep against the reference: errors.csv, sweep.json.
    Sweep {
        scenario: String,
        #[arg(long, value_parser = parse_axis)]
        axis: Option<Axis>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every method of the scenario against one reference: compare.csv.
    Compare {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Second-moment histories over the disorder levels: moments.csv.
    Localize {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand, Debug)]
enum ScenarioAction {
    List,
    /// Writes a built-in scenario as TOML.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
