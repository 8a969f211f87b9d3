//! Command-line front end: identity suites, height-probability tables and
//! finite-size convergence reports.
//!
//! Exit status: 0 on success, 1 on a numerical failure, 2 on a
//! configuration or usage error.

mod config;
mod lhp;
mod suites;

use clap::{Parser, Subcommand, ValueEnum};
use config::RunConfig;
use csos::matel::AdjacentPath;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "csos", version, about = "Cyclic SOS model laboratory")]
struct Cli {
    /// flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON path file with vertices, heights and optional column parameters
    #[arg(long, global = true)]
    path: Option<PathBuf>,
    /// output file; a .csv extension selects CSV for tables
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Fourier modes for truncated products and syntheses
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// quadrature nodes per integration variable
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// accepted quadrature error estimate
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// run an identity suite on seeded random inputs
    Identities { suite: Suite },
    /// height-probability table over global height shifts and flat labels
    Lhp { mode: LhpMode },
    /// finite-size deviations from the thermodynamic value over n_list
    Converge,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Elliptic,
    Lattice,
    #[value(name = "appendixB")]
    AppendixB,
    #[value(name = "appendixC")]
    AppendixC,
    #[value(name = "appendixD")]
    AppendixD,
}

#[derive(Clone, Copy, ValueEnum)]
enum LhpMode {
    Finite,
    Thermo,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<csos::Error> for Failure {
    fn from(e: csos::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let txt = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&txt).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn load_path(path: Option<&Path>) -> Result<AdjacentPath, Failure> {
    match path {
        None => Ok(AdjacentPath::vertical(vec![0])),
        Some(p) => {
            let txt = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            AdjacentPath::from_json(&txt).map_err(|e| Failure::Config(e.to_string()))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Identities { suite } => {
            let seed = cli.seed;
            let modes = cli.modes.or(cfg.modes).unwrap_or(200);
            let (name, checks) = match suite {
                Suite::Elliptic => ("elliptic", suites::elliptic(seed)?),
                Suite::Lattice => ("lattice", suites::lattice(seed)?),
                Suite::AppendixB => ("appendixB", suites::appendix_b(seed)?),
                Suite::AppendixC => ("appendixC", suites::appendix_c(seed, modes)?),
                Suite::AppendixD => ("appendixD", suites::appendix_d(seed)?),
            };
            let pass = checks.iter().all(suites::Check::pass);
            let max = checks.iter().map(|c| c.max_residual).fold(0.0, f64::max);
            let report = json!({
                "suite": name,
                "seed": seed,
                "checks": checks.iter().map(suites::Check::to_json).collect::<Vec<_>>(),
                "max_residual": max,
                "pass": pass,
            });
            emit(out, &pretty(&report))?;
            match checks.iter().find(|c| !c.pass()) {
                Some(c) => Err(Failure::Numerical(format!(
                    "identity {} failed: residual {:e} not below {:e}",
                    c.name, c.max_residual, c.tolerance
                ))),
                None => Ok(()),
            }
        }
        Command::Lhp { mode } => {
            let path = load_path(cli.path.as_deref())?;
            let opts = lhp::Options::new(&cfg, cli.resolution, cli.tolerance);
            let mode = match mode {
                LhpMode::Finite => lhp::Mode::Finite,
                LhpMode::Thermo => lhp::Mode::Thermo,
            };
            let table = lhp::table(&cfg, mode, &path, &opts)?;
            let csv = cfg.csv.unwrap_or_else(|| out.and_then(Path::extension).is_some_and(|e| e == "csv"));
            let text = if csv { table.to_csv()? } else { pretty(&table.to_json()) };
            emit(out, &text)
        }
        Command::Converge => {
            let path = load_path(cli.path.as_deref())?;
            let opts = lhp::Options::new(&cfg, cli.resolution, cli.tolerance);
            emit(out, &pretty(&lhp::converge(&cfg, &path, &opts)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
    }
}
