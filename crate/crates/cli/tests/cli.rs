use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CANONICAL: &str = include_str!("../../../configs/canonical.toml");

const SMALL: &str = r#"
seed = 3

[grid]
half_length = 8.0
n_points = 64

[system]
alpha = 0.1
beta = 0.2
s = 0.75
g = { kind = "tanh-blend", m = 0.0, big_m = 1.0 }

[data]
u0 = { kind = "gaussian", amplitude = 0.5, center = 0.0, width = 2.0 }
v0 = { kind = "random", l2_norm = 0.5 }

[perturbation]
eps = 0.2

[time]
t_final = 0.1
dt = 0.005
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracbenney"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn invoke(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![verb, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            assert_same_tree(&pa, &pb);
        } else {
            assert!(fs::read(&pa).unwrap() == fs::read(&pb).unwrap(), "{} differs", pa.display());
        }
    }
}

#[test]
fn zero_data_run_passes_with_trivial_outputs() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace(r#"u0 = { kind = "gaussian", amplitude = 0.5, center = 0.0, width = 2.0 }"#, r#"u0 = { kind = "zero" }"#)
        .replace(r#"v0 = { kind = "random", l2_norm = 0.5 }"#, r#"v0 = { kind = "zero" }"#);
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = invoke("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["status"], "pass");
    for c in summary["checks"].as_array().unwrap() {
        assert_eq!(c["passed"], true, "{c}");
    }
    assert_eq!(summary["final"]["mass"], 0.0);
    assert_eq!(summary["final"]["energy"], 0.0);
}

#[test]
fn canonical_run_is_green_and_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CANONICAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = invoke("run", &cfg, dir, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    assert_same_tree(&a, &b);

    let summary = json(&a.join("summary.json"));
    assert_eq!(summary["substeps_per_step"], 1);
    let hash = summary["stamp"]["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    for file in ["trajectory.jsonl", "diagnostics.jsonl"] {
        let text = fs::read_to_string(a.join(file)).unwrap();
        let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["config_hash"], hash.as_str());
        assert_eq!(header["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(header["schema_version"], 1);
    }
    let csv = fs::read_to_string(a.join("series.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains(&hash));
    assert_eq!(csv.lines().count(), 2 + 1001);
    assert!(fs::read_to_string(a.join("config.toml")).unwrap().contains(&hash));
}

#[test]
fn non_power_of_two_grid_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("n_points = 64", "n_points = 100"));
    let o = invoke("run", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("power of two"));
}

#[test]
fn malformed_and_missing_configs_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("alpha = 0.1", "alpha = \"high\""));
    assert_eq!(invoke("run", &cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let missing = tmp.path().join("absent.toml");
    assert_eq!(invoke("run", &missing, &tmp.path().join("o"), &[]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace("alpha = 0.1", "alpha = 0.5")
        .replace("amplitude = 0.5, center = 0.0, width = 2.0", "amplitude = 1.5, center = 0.0, width = 1.0")
        .replace(r#"v0 = { kind = "random", l2_norm = 0.5 }"#, r#"v0 = { kind = "zero" }"#)
        .replace("t_final = 0.1", "t_final = 0.5\nblowup_factor = 1.05");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = invoke("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&out.join("summary.json"))["status"], "blow-up");
}

#[test]
fn single_rung_ladder_degenerates_to_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("sweep");
    let o = invoke("sweep", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = json(&out.join("sweep_summary.json"));
    assert!(summary["cauchy"].as_array().unwrap().is_empty());
    let rung = json(&out.join("runs/eps-00/summary.json"));
    assert_eq!(rung["status"], "pass");

    let direct = tmp.path().join("direct");
    assert_eq!(invoke("run", &cfg, &direct, &[]).status.code(), Some(0));
    for file in ["trajectory.jsonl", "series.csv"] {
        let a = fs::read_to_string(out.join("runs/eps-00").join(file)).unwrap();
        let b = fs::read_to_string(direct.join(file)).unwrap();
        // Same run, identical samples; the provenance line differs only if the config does.
        assert_eq!(a.lines().skip(1).collect::<Vec<_>>(), b.lines().skip(1).collect::<Vec<_>>());
    }
}

#[test]
fn halving_ladder_emits_three_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL.replace("eps = 0.2", "eps = 0.2\neps_ladder = [0.4, 0.2, 0.1, 0.05]"),
    );
    let out = tmp.path().join("sweep");
    let o = invoke("sweep", &cfg, &out, &["--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(out.join("cauchy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
    for i in 0..4 {
        assert!(out.join(format!("runs/eps-{i:02}/trajectory.jsonl")).exists());
    }
}

#[test]
fn stability_map_is_reproducible_across_workers() {
    // A tight blow-up ceiling makes the larger data trip the detector, so
    // the map contains both completed and blown-up cells.
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace("amplitude = 0.5, center = 0.0, width = 2.0", "amplitude = 1.5, center = 0.0, width = 1.0")
        .replace(r#"v0 = { kind = "random", l2_norm = 0.5 }"#, r#"v0 = { kind = "zero" }"#)
        .replace("t_final = 0.1", "t_final = 0.3\nblowup_factor = 1.05")
        + "\n[sweep]\nalphas = [0.0, 1e-70, 0.5, 2.0]\nu0_scales = [0.3, 1.0]\n";
    let cfg = write_config(tmp.path(), &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = invoke("sweep", &cfg, &a, &["--workers", "1"]);
    let ob = invoke("sweep", &cfg, &b, &["--workers", "3"]);
    assert_eq!(oa.status.code(), Some(3));
    assert_eq!(oa.status.code(), ob.status.code());
    assert_same_tree(&a, &b);
    let summary = json(&a.join("sweep_summary.json"));
    assert_eq!(summary["failed_rungs"].as_array().unwrap().len(), 1);
    let cells = summary["stability_map"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    let blown: Vec<bool> = cells.iter().map(|c| c["blew_up"] == true).collect();
    assert_eq!(blown, [false, false, false, false, true, true, true, true]);
}

#[test]
fn verify_gronwall_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["verify", "--suite", "gronwall", "--seed", "5", "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS gronwall/")).count(), 4);
    }
    assert_same_tree(&a, &b);
    let report = json(&a.join("verify-gronwall.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["stamp"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn verify_all_aggregates_every_module() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["verify", "--suite", "all", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = json(&tmp.path().join("verify-all.json"));
    let suites: Vec<&str> = report["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["suite"].as_str().unwrap())
        .collect();
    assert_eq!(suites, ["operators", "inequalities", "propagators", "gronwall", "entropy", "weakform"]);
}

#[test]
fn unknown_suite_is_rejected() {
    let o = run(&["verify", "--suite", "spectra"]);
    assert_eq!(o.status.code(), Some(2));
}
