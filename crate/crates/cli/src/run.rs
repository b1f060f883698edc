//! The `run` verb: one solve plus diagnostics and invariant checks.

use std::path::Path;

use anyhow::Result;
use fracbenney::diagnostics::{record_diagnostics, smallness_condition, theta_envelope, DiagnosticsRecord};
use fracbenney::solver::{solve_perturbed, Trajectory};
use fracbenney::Error;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{self, Check};
use crate::config::{Prepared, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    InvariantFailure,
    BlowUp,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub trajectory: Option<Trajectory>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

/// Solver failures that mean the run left the regime where it can continue.
pub fn is_blowup(e: &Error) -> bool {
    matches!(
        e,
        Error::BlowUp { .. } | Error::NonContraction { .. } | Error::PicardMaxIter(_)
    )
}

fn relative(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        value.abs()
    } else {
        value.abs() / scale
    }
}

pub fn invariant_checks(cfg: &RunConfig, traj: &Trajectory, records: &[DiagnosticsRecord]) -> Vec<Check> {
    let th = &cfg.thresholds;
    let m0 = records[0].mass;
    let drift = records.iter().map(|r| relative(r.mass - m0, m0)).fold(0.0, f64::max);
    let sup0 = traj.v[0].sup_on_grid();
    let excess = traj.v.iter().map(|v| v.sup_on_grid() - sup0).fold(0.0, f64::max);
    let energy = records.iter().map(|r| r.energy_balance_residual).fold(0.0, f64::max);
    let vbal = records.iter().map(|r| r.v_balance_residual).fold(0.0, f64::max);
    vec![
        Check::bound("mass_drift", drift, th.mass_drift),
        Check::bound("sup_v_excess", excess, th.sup_excess),
        Check::bound("energy_balance_residual", energy, th.energy_balance),
        Check::bound("v_balance_residual", vbal, th.v_balance),
    ]
}

/// Runs one configuration and writes its artifacts into `dir`.
pub fn execute(cfg: &RunConfig, prepared: &Prepared, dir: &Path) -> Result<RunOutcome> {
    artifacts::ensure_dir(dir)?;
    artifacts::write_config(dir, cfg)?;
    let hash = cfg.hash();
    let Prepared { params, run, u0, v0 } = prepared;
    let smallness = smallness_condition(params, u0, v0, run)?;
    let traj = match solve_perturbed(u0, v0, params, run) {
        Ok(t) => t,
        Err(e) if is_blowup(&e) => {
            let summary = json!({
                "stamp": artifacts::stamp(&hash),
                "status": RunStatus::BlowUp,
                "error": e.to_string(),
                "smallness": smallness,
            });
            artifacts::write_json(&dir.join("summary.json"), &summary)?;
            return Ok(RunOutcome {
                status: RunStatus::BlowUp,
                trajectory: None,
                checks: vec![],
                error: Some(e.to_string()),
            });
        }
        Err(e) => return Err(e.into()),
    };
    let records = record_diagnostics(&traj);
    let mut checks = invariant_checks(cfg, &traj, &records);
    let env = theta_envelope(&traj);
    let holds = env.theta_holds() && env.h_holds();
    let detail = format!("θ margin {:.3e}, H margin {:.3e}", env.theta_margin, env.h_margin);
    let envelope = Check::flag("global_bound_envelope", holds, detail);
    // The envelope is only guaranteed when the smallness condition holds.
    checks.push(if smallness.satisfied { envelope } else { envelope.informational() });

    let status = if checks.iter().any(Check::failed) {
        RunStatus::InvariantFailure
    } else {
        RunStatus::Pass
    };
    artifacts::write_trajectory(&dir.join("trajectory.jsonl"), &traj, &hash, cfg.output.trajectory_stride)?;
    artifacts::write_diagnostics(&dir.join("diagnostics.jsonl"), &records, &hash)?;
    artifacts::write_series_csv(&dir.join("series.csv"), &traj, &records, &hash)?;
    let last = records.last().expect("trajectory has the initial sample");
    let summary = json!({
        "stamp": artifacts::stamp(&hash),
        "status": status,
        "steps": traj.len() - 1,
        "substeps_per_step": traj.substeps_per_step,
        "picard_sweeps": traj.steps.iter().map(|s| s.sweeps).sum::<usize>(),
        "final": last,
        "checks": checks,
        "smallness": smallness,
    });
    artifacts::write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutcome {
        status,
        trajectory: Some(traj),
        checks,
        error: None,
    })
}
