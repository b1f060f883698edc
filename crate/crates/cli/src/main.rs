#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;
mod run;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::artifacts::Check;
use crate::config::{ConfigError, RunConfig};
use crate::run::RunStatus;
use crate::verify::Suite;

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

#[derive(Parser)]
#[command(name = "fracbenney", version, about = "Runs, sweeps and verification suites for the regularized short-wave/long-wave solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once, record diagnostics and check invariants.
    Run(Common),
    /// ε-ladder Cauchy table and α stability map.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads for the fan-out.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Seeded property ensembles of one module, or all of them.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failures mapped onto exit codes.
enum Failure {
    Config(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn print_checks(prefix: &str, checks: &[Check]) {
    for c in checks {
        let tag = match (c.passed, c.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "INFO",
        };
        let detail = if c.detail.is_empty() {
            format!("{:.3e} (threshold {:.1e})", c.value, c.threshold)
        } else {
            c.detail.clone()
        };
        println!("{tag} {prefix}{}: {detail}", c.name);
    }
}

fn cmd_run(common: &Common) -> Result<u8, Failure> {
    let cfg = load(common)?;
    let prepared = cfg.prepare()?;
    let outcome = run::execute(&cfg, &prepared, &cfg.output.dir)?;
    print_checks("", &outcome.checks);
    println!("artifacts in {}", cfg.output.dir.display());
    Ok(match outcome.status {
        RunStatus::Pass => 0,
        RunStatus::InvariantFailure => EXIT_INVARIANT,
        RunStatus::BlowUp => {
            eprintln!("solver blow-up: {}", outcome.error.unwrap_or_default());
            EXIT_BLOWUP
        }
    })
}

fn cmd_sweep(common: &Common, workers: usize) -> Result<u8, Failure> {
    if workers == 0 {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let cfg = load(common)?;
    let prepared = cfg.prepare()?;
    let outcome = sweep::execute_sweep(&cfg, &prepared, &cfg.output.dir, workers)?;
    for r in &outcome.rows {
        println!(
            "ε {} → {}: ‖Δu‖ {:.4e}, ‖Δv‖ {:.4e}",
            r.eps_coarse, r.eps_fine, r.u_diff, r.v_diff
        );
    }
    for f in &outcome.failed_rungs {
        println!("failed rung ε = {}: {}", f.eps, f.error);
    }
    for c in &outcome.cells {
        println!(
            "α {:+.3e} scale {}: {} analytic, {}",
            c.alpha,
            c.u0_scale,
            if c.cell.satisfied { "inside" } else { "outside" },
            if c.cell.blew_up { "blew up" } else { "completed" }
        );
    }
    for f in &outcome.failed_cells {
        println!("failed cell α = {}, scale {}: {}", f.alpha, f.u0_scale, f.error);
    }
    print_checks("", &outcome.checks);
    println!("artifacts in {}", cfg.output.dir.display());
    Ok(if outcome.any_rung_blew_up() {
        EXIT_BLOWUP
    } else if outcome.checks.iter().any(Check::failed) || !outcome.failed_rungs.is_empty() {
        EXIT_INVARIANT
    } else {
        0
    })
}

fn cmd_verify(suite: Suite, seed: u64, out: Option<&Path>) -> Result<u8, Failure> {
    let reports = verify::verify(suite, seed)?;
    for r in &reports {
        print_checks(&format!("{}/", r.suite.name()), &r.checks);
    }
    let passed = reports.iter().all(|r| r.passed());
    if let Some(dir) = out {
        artifacts::ensure_dir(dir)?;
        let hash = artifacts::invocation_hash(&format!("verify suite={} seed={seed}", suite.name()));
        let report = json!({
            "stamp": artifacts::stamp(&hash),
            "suite": suite,
            "seed": seed,
            "passed": passed,
            "reports": reports,
        });
        artifacts::write_json(&dir.join(format!("verify-{}.json", suite.name())), &report)?;
    }
    Ok(if passed { 0 } else { EXIT_INVARIANT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Sweep { common, workers } => cmd_sweep(common, *workers),
        Command::Verify { suite, seed, out } => cmd_verify(*suite, *seed, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
