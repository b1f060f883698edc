//! Output files. Every file carries the artifact version and the config
//! hash; nothing time- or host-dependent is written, so identical configs
//! produce byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use fracbenney::diagnostics::DiagnosticsRecord;
use fracbenney::solver::Trajectory;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TRAJECTORY_SCHEMA: u32 = 1;
pub const DIAGNOSTICS_SCHEMA: u32 = 1;

/// Outcome of one invariant check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Informational checks are reported but never fail a run.
    pub asserted: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    pub fn bound(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            asserted: true,
            value,
            threshold,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            asserted: true,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: detail.into(),
        }
    }

    pub fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn failed(&self) -> bool {
        self.asserted && !self.passed
    }
}

/// Hash identifying an invocation that has no config file.
pub fn invocation_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn stamp(hash: &str) -> Value {
    json!({ "version": VERSION, "config_hash": hash })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Stores the normalized config next to the outputs.
pub fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let mut w = create(&dir.join("config.toml"))?;
    writeln!(w, "# fracbenney {VERSION}, config_hash = {}", cfg.hash())?;
    w.write_all(cfg.to_toml().as_bytes())?;
    w.flush()?;
    Ok(())
}

/// JSON-lines trajectory: a header record, then every `stride`-th stored
/// sample (and always the last one) with real/imaginary parts of `u` and
/// the samples of `v`.
pub fn write_trajectory(path: &Path, traj: &Trajectory, hash: &str, stride: usize) -> Result<()> {
    let mut w = create(path)?;
    let grid = traj.u[0].grid();
    let header = json!({
        "record": "header",
        "schema": "fracbenney/trajectory",
        "schema_version": TRAJECTORY_SCHEMA,
        "version": VERSION,
        "config_hash": hash,
        "half_length": grid.half_length(),
        "n_points": grid.n_points(),
        "x": grid.xs(),
        "stride": stride,
        "substeps_per_step": traj.substeps_per_step,
        "fields": ["u_re", "u_im", "v"],
    });
    writeln!(w, "{header}")?;
    let last = traj.len() - 1;
    for i in (0..traj.len()).filter(|&i| i % stride == 0 || i == last) {
        let u = traj.u[i].samples();
        let rec = json!({
            "record": "sample",
            "step": i,
            "t": traj.times[i],
            "u_re": u.iter().map(|z| z.re).collect::<Vec<_>>(),
            "u_im": u.iter().map(|z| z.im).collect::<Vec<_>>(),
            "v": traj.v[i].real_parts(),
        });
        writeln!(w, "{rec}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord], hash: &str) -> Result<()> {
    let mut w = create(path)?;
    let header = json!({
        "record": "header",
        "schema": "fracbenney/diagnostics",
        "schema_version": DIAGNOSTICS_SCHEMA,
        "version": VERSION,
        "config_hash": hash,
    });
    writeln!(w, "{header}")?;
    for r in records {
        let mut v = serde_json::to_value(r)?;
        v["record"] = json!("sample");
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready time series.
pub fn write_series_csv(path: &Path, traj: &Trajectory, records: &[DiagnosticsRecord], hash: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# fracbenney {VERSION}, config_hash = {hash}")?;
    writeln!(
        w,
        "t,mass,energy,u_sup,v_sup,v_l2,energy_balance_residual,v_balance_residual"
    )?;
    for (r, u) in records.iter().zip(&traj.u) {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t,
            r.mass,
            r.energy,
            u.sup_on_grid(),
            r.v_sup,
            r.v_l2,
            r.energy_balance_residual,
            r.v_balance_residual
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV table with a provenance comment line.
pub fn write_csv(path: &Path, hash: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# fracbenney {VERSION}, config_hash = {hash}")?;
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}
