//! Configuration-driven front end for `torusmt-core`: solves, inequality
//! scans and the identity suite, with JSON reports and CSV tables.

pub mod config;
pub mod error;
pub mod expr;

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;
use torusmt_core::Execution;

use crate::commands::Output;
use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_DIR_ENV: &str = "TORUSMT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "torusmt-out";

#[derive(Debug, Parser)]
#[command(
    name = "torusmt",
    version,
    about = "Exponential elliptic problems and Moser-Trudinger probes on a solid torus"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and $TORUSMT_OUT_DIR).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of mesh rings (overrides mesh.n_rings).
    #[arg(long, global = true)]
    pub mesh: Option<usize>,
    /// Monte Carlo seed (overrides verify.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and Monte Carlo.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve (P1): -Laplacian v + gamma = f e^v.
    SolveP1,
    /// Solve (P2) with its nonlinear Robin condition.
    SolveP2,
    /// Blow-up family scan of the exponential inequality.
    MtScan,
    /// e^{alpha v^2} integrals over the Moser family.
    Corollary,
    /// Identity suite: reduction identities, convergence orders, (P2) residuals.
    Verify {
        /// Relative perturbation of the metric weight (fault injection).
        #[arg(long)]
        perturb_weight: Option<f64>,
    },
    /// (P1) solves over a list of gamma values.
    ScanGamma,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveP1 => "solve-p1",
            Command::SolveP2 => "solve-p2",
            Command::MtScan => "mt-scan",
            Command::Corollary => "corollary",
            Command::Verify { .. } => "verify",
            Command::ScanGamma => "scan-gamma",
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.mesh {
        cfg.mesh.n_rings = n;
    }
    if let Some(seed) = cli.seed {
        cfg.verify.seed = seed;
    }
    if let Command::Verify { perturb_weight: Some(w) } = cli.command {
        cfg.verify.perturb_weight = w;
    }
    cfg.output.dir = Some(
        cli.out
            .clone()
            .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
            .to_string_lossy()
            .into_owned(),
    );
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Output, CliError> {
    let exec = Execution::Parallel;
    match cmd {
        Command::SolveP1 => commands::solve_p1(cfg),
        Command::SolveP2 => commands::solve_p2(cfg),
        Command::MtScan => commands::mt_scan(cfg, exec),
        Command::Corollary => commands::corollary(cfg, exec),
        Command::Verify { .. } => commands::verify(cfg, exec),
        Command::ScanGamma => commands::scan_gamma(cfg, exec),
    }
}

fn write_outputs(
    dir: &Path,
    cmd: &Command,
    cfg: &RunConfig,
    threads: Option<usize>,
    outcome: &Result<Output, CliError>,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let code = match outcome {
        Ok(o) => o.failure.as_ref().map_or(0, CliError::exit_code),
        Err(e) => e.exit_code(),
    };
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cmd.name(),
        "versions": { "torusmt-cli": env!("CARGO_PKG_VERSION"), "torusmt-core": torusmt_core::VERSION },
        "config": cfg,
        "threads": threads,
        "exit_code": code,
    });
    match outcome {
        Ok(o) => {
            report["status"] = json!(if o.failure.is_some() { "failed" } else { "ok" });
            report["result"] = o.result.clone();
            if let Some(f) = &o.failure {
                report["error"] = json!(f.to_string());
            }
            for (name, body) in &o.csv {
                let path = dir.join(name);
                std::fs::write(&path, body)?;
                written.push(path);
            }
        }
        Err(e) => {
            report["status"] = json!("error");
            report["error"] = json!(e.to_string());
        }
    }
    let path = dir.join(format!("{}.json", cmd.name()));
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    written.push(path);
    Ok(written)
}

/// Runs the command line `args` (including the program name) and returns the
/// process exit code: 0 success, 2 non-convergence, 3 configuration error,
/// 1 anything else (including failed identity checks).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    let outcome = pool.install(|| dispatch(&cli.command, &cfg));
    let dir = PathBuf::from(cfg.output.dir.as_deref().unwrap_or(DEFAULT_OUT_DIR));
    match write_outputs(&dir, &cli.command, &cfg, cli.threads, &outcome) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    match outcome {
        Ok(o) => {
            for line in &o.summary {
                println!("{line}");
            }
            match o.failure {
                Some(f) => {
                    eprintln!("error: {f}");
                    f.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
