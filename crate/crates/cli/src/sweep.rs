//! The `sweep` verb: ε-ladder Cauchy table and the (α, ‖u₀‖₂) stability
//! map, fanned out over a worker pool with one directory per run.

use std::path::Path;

use anyhow::{Context, Result};
use fracbenney::diagnostics::{smallness_condition, stability_cell, StabilityCell};
use fracbenney::solver::{space_time_l2_distance, SystemParams, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{self, Check};
use crate::config::{Prepared, RunConfig};
use crate::run::{execute, RunStatus};

#[derive(Debug, Clone, Serialize)]
pub struct CauchyRow {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    pub u_diff: f64,
    pub v_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RungFailure {
    pub eps: f64,
    pub status: Option<RunStatus>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapCell {
    pub alpha: f64,
    pub u0_scale: f64,
    pub u0_l2: f64,
    #[serde(flatten)]
    pub cell: StabilityCell,
    /// Analytic `|α|` frontier at this data scale.
    pub alpha_frontier: f64,
    /// Analytic `‖u₀‖₂` frontier at this α.
    pub energy_frontier: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapFailure {
    pub alpha: f64,
    pub u0_scale: f64,
    pub error: String,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<CauchyRow>,
    pub failed_rungs: Vec<RungFailure>,
    pub cells: Vec<MapCell>,
    pub failed_cells: Vec<MapFailure>,
    pub checks: Vec<Check>,
}

impl SweepOutcome {
    pub fn any_rung_blew_up(&self) -> bool {
        self.failed_rungs.iter().any(|f| f.status == Some(RunStatus::BlowUp))
    }
}

/// Differences between consecutive successful rungs; a failed rung breaks
/// the chain.
fn cauchy_rows(rungs: &[(f64, Option<Trajectory>)]) -> Result<Vec<CauchyRow>> {
    let mut rows = vec![];
    for w in rungs.windows(2) {
        if let ((e1, Some(a)), (e2, Some(b))) = (&w[0], &w[1]) {
            rows.push(CauchyRow {
                eps_coarse: *e1,
                eps_fine: *e2,
                u_diff: space_time_l2_distance(&a.u, &b.u, a.run.dt)?,
                v_diff: space_time_l2_distance(&a.v, &b.v, a.run.dt)?,
            });
        }
    }
    Ok(rows)
}

fn run_ladder(cfg: &RunConfig, prepared: &Prepared, root: &Path) -> (Vec<(f64, Option<Trajectory>)>, Vec<RungFailure>) {
    let ladder = if cfg.perturbation.eps_ladder.is_empty() {
        vec![cfg.perturbation.eps]
    } else {
        cfg.perturbation.eps_ladder.clone()
    };
    let results: Vec<(f64, Result<crate::run::RunOutcome>)> = ladder
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut rung = cfg.clone();
            rung.perturbation.eps = eps;
            rung.perturbation.eps_ladder.clear();
            let dir = root.join("runs").join(format!("eps-{i:02}"));
            rung.output.dir = dir.clone();
            let mut p = prepared.clone();
            p.run.eps = eps;
            (eps, execute(&rung, &p, &dir))
        })
        .collect();
    let mut rungs = vec![];
    let mut failed = vec![];
    for (eps, r) in results {
        match r {
            Ok(o) => {
                if o.status != RunStatus::Pass {
                    let error = o.error.clone().unwrap_or_else(|| {
                        let names: Vec<&str> = o.checks.iter().filter(|c| c.failed()).map(|c| c.name.as_str()).collect();
                        format!("failed checks: {}", names.join(", "))
                    });
                    failed.push(RungFailure { eps, status: Some(o.status), error });
                }
                rungs.push((eps, o.trajectory));
            }
            Err(e) => {
                failed.push(RungFailure { eps, status: None, error: format!("{e:#}") });
                rungs.push((eps, None));
            }
        }
    }
    (rungs, failed)
}

fn run_map(cfg: &RunConfig, prepared: &Prepared, root: &Path) -> Result<(Vec<MapCell>, Vec<MapFailure>)> {
    let grid: Vec<(usize, f64, usize, f64)> = cfg
        .sweep
        .u0_scales
        .iter()
        .enumerate()
        .flat_map(|(si, &scale)| cfg.sweep.alphas.iter().enumerate().map(move |(ai, &a)| (si, scale, ai, a)))
        .collect();
    let hash = cfg.hash();
    let results: Vec<Result<std::result::Result<MapCell, MapFailure>>> = grid
        .par_iter()
        .map(|&(si, scale, ai, alpha)| {
            let u0 = prepared.u0.scale_real(scale);
            let params = SystemParams { alpha, ..prepared.params };
            let cell = stability_cell(&u0, &prepared.v0, &params, &prepared.run).and_then(|cell| {
                let at_alpha = smallness_condition(&params, &u0, &prepared.v0, &prepared.run)?;
                let at_base = smallness_condition(&prepared.params, &u0, &prepared.v0, &prepared.run)?;
                Ok(MapCell {
                    alpha,
                    u0_scale: scale,
                    u0_l2: u0.dealias().l2_norm(),
                    cell,
                    alpha_frontier: at_base.alpha_frontier,
                    energy_frontier: at_alpha.energy_frontier,
                })
            });
            let dir = root.join("map").join(format!("u{si:02}-a{ai:02}"));
            artifacts::ensure_dir(&dir)?;
            let record = match &cell {
                Ok(c) => json!({ "stamp": artifacts::stamp(&hash), "cell": c }),
                Err(e) => json!({ "stamp": artifacts::stamp(&hash), "alpha": alpha, "u0_scale": scale, "error": e.to_string() }),
            };
            artifacts::write_json(&dir.join("cell.json"), &record)?;
            Ok(cell.map_err(|e| MapFailure {
                alpha,
                u0_scale: scale,
                error: e.to_string(),
            }))
        })
        .collect();
    let mut cells = vec![];
    let mut failed = vec![];
    for r in results {
        match r? {
            Ok(c) => cells.push(c),
            Err(f) => failed.push(f),
        }
    }
    Ok((cells, failed))
}

pub fn execute_sweep(cfg: &RunConfig, prepared: &Prepared, root: &Path, workers: usize) -> Result<SweepOutcome> {
    artifacts::ensure_dir(root)?;
    artifacts::write_config(root, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    let (rungs, failed_rungs) = pool.install(|| run_ladder(cfg, prepared, root));
    let rows = cauchy_rows(&rungs)?;
    drop(rungs);
    let (cells, failed_cells) = pool.install(|| run_map(cfg, prepared, root))?;

    let decreasing = rows
        .windows(2)
        .all(|w| w[1].u_diff < w[0].u_diff && w[1].v_diff < w[0].v_diff);
    let inside_blowups = cells.iter().filter(|c| c.cell.strictly_inside && c.cell.blew_up).count();
    let checks = vec![
        Check::flag(
            "cauchy_differences_decrease",
            decreasing,
            format!("{} difference rows", rows.len()),
        ),
        Check::flag(
            "no_blowup_inside_frontier",
            inside_blowups == 0,
            format!("{inside_blowups} blow-up cells strictly inside the analytic region"),
        ),
    ];

    let hash = cfg.hash();
    let cauchy: Vec<String> = rows
        .iter()
        .map(|r| format!("{:e},{:e},{:e},{:e}", r.eps_coarse, r.eps_fine, r.u_diff, r.v_diff))
        .collect();
    artifacts::write_csv(&root.join("cauchy.csv"), &hash, "eps_coarse,eps_fine,u_diff,v_diff", &cauchy)?;
    let map: Vec<String> = cells
        .iter()
        .map(|c| {
            format!(
                "{:e},{:e},{:e},{:e},{:e},{},{},{},{:e},{:e}",
                c.alpha,
                c.u0_scale,
                c.u0_l2,
                c.cell.ln_lhs,
                c.cell.rhs.ln(),
                c.cell.satisfied,
                c.cell.strictly_inside,
                c.cell.blew_up,
                c.alpha_frontier,
                c.energy_frontier
            )
        })
        .collect();
    artifacts::write_csv(
        &root.join("stability.csv"),
        &hash,
        "alpha,u0_scale,u0_l2,ln_lhs,ln_rhs,satisfied,strictly_inside,blew_up,alpha_frontier,energy_frontier",
        &map,
    )?;
    let summary = json!({
        "stamp": artifacts::stamp(&hash),
        "cauchy": rows,
        "failed_rungs": failed_rungs,
        "stability_map": cells,
        "failed_cells": failed_cells,
        "checks": checks,
    });
    artifacts::write_json(&root.join("sweep_summary.json"), &summary)?;
    Ok(SweepOutcome {
        rows,
        failed_rungs,
        cells,
        failed_cells,
        checks,
    })
}
