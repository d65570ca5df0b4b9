//! End-to-end runs of the `stochgame` binary and the runner library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use stochgame_cli::{run_document, RunOptions};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochgame"))
}

fn write_config(dir: &Path, doc: &Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

fn run(dir: &Path, doc: &Value, extra: &[&str]) -> Output {
    let cfg = write_config(dir, doc);
    binary()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn rule_pair(tau: f64) -> Value {
    json!({ "tau": { "type": "constant", "params": { "time": tau } }, "rho": { "type": "terminal" } })
}

fn null_config() -> Value {
    json!({
        "name": "null",
        "problem": { "preset": "null" },
        "grid": { "axes": [{ "lo": -3.0, "hi": 3.0, "nodes": 61 }], "n_t": 10 },
        "mc": { "seed": 1, "batch": 20, "steps": 10 },
        "probes": [{ "t": 0.0, "x": [0.0] }],
        "pipeline": [{ "stage": "solve_upper" }]
    })
}

/// Certifies `w = 3 + x^2 - 1.7 t` on the heat preset, whose drift of
/// `E[w]` is `+0.3` per unit time; with this seed the shortfall lies within
/// three standard errors of the threshold.
fn inconclusive_config() -> Value {
    json!({
        "name": "inconclusive",
        "problem": { "preset": "heat" },
        "grid": { "axes": [{ "lo": -3.0, "hi": 3.0, "nodes": 61 }] },
        "mc": { "seed": 2, "batch": 50, "steps": 20 },
        "probes": [{ "t": 0.0, "x": [0.0] }],
        "pipeline": [{
            "stage": "certify",
            "pairs": [rule_pair(0.0)],
            "candidates": [{
                "kind": "polynomial", "name": "w", "class": "super_upper",
                "w": [{ "coef": 3.0 }, { "coef": 1.0, "x_pows": [2] }, { "coef": -1.7, "t_pow": 1 }]
            }]
        }]
    })
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn null_preset_grid_equals_payoff_at_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &null_config(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&dir.path().join("out/00_upper.grid.csv"));
    assert_eq!(rows[0], ["t", "x_1", "value", "saddle_u", "saddle_v"]);
    assert_eq!(rows.len(), 1 + 11 * 61);
    for r in &rows[1..] {
        let x: f64 = r[1].parse().unwrap();
        let v: f64 = r[2].parse().unwrap();
        assert!((v - (-x * x).exp()).abs() <= 1e-15, "x = {x}: {v}");
        assert_eq!(
            r[2].split('e')
                .next()
                .unwrap()
                .replace(['.', '-'], "")
                .len(),
            17
        );
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["exit_status"], 0);
    assert_eq!(manifest["config"], null_config());
    assert_eq!(manifest["stages"][0]["artifacts"][0], "00_upper.grid.csv");
    assert_eq!(manifest["seeds"], json!([1]));
}

#[test]
fn failing_verdict_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = null_config();
    doc["problem"] = json!({ "preset": "hopf_lax_asym" });
    doc["grid"] = json!({ "axes": [{ "lo": -3.0, "hi": 3.0, "nodes": 61 }] });
    doc["pipeline"] = json!([{
        "stage": "certify",
        "pairs": [rule_pair(0.0)],
        "candidates": [{ "kind": "polynomial", "name": "rising", "class": "super_upper",
                         "w": [{ "coef": 1.0 }, { "coef": 1.0, "t_pow": 1 }] }]
    }]);
    let out = run(dir.path(), &doc, &[]);
    assert_eq!(out.status.code(), Some(1));
    let rows = read_csv(&dir.path().join("out/summary.csv"));
    assert_eq!(rows[1][7], "fail");
    assert_eq!(rows[1][8], "00_rising.cert.json");
}

#[test]
fn strict_mode_demotes_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &inconclusive_config(), &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        read_csv(&dir.path().join("out/summary.csv"))[1][7],
        "inconclusive"
    );
    let out = run(dir.path(), &inconclusive_config(), &["--strict"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stage_error_halts_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = null_config();
    doc["problem"] = json!({ "preset": "non_isaacs" });
    doc["pipeline"] = json!([
        { "stage": "solve_upper" },
        { "stage": "saddle", "deviations": 2 },
        { "stage": "solve_lower" }
    ]);
    let out = run(dir.path(), &doc, &[]);
    assert_eq!(out.status.code(), Some(1));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    assert_eq!(stages[0]["status"], "ok");
    assert_eq!(stages[1]["status"], "error");
    assert!(stages[1]["error"].as_str().unwrap().contains("Isaacs"));
    assert_eq!(stages[2]["status"], "not_run");
}

#[test]
fn validate_reports_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let ok = binary()
        .arg("validate")
        .arg(write_config(dir.path(), &null_config()))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let mut bad = null_config();
    bad["probes"][0]["x"] = json!([2.9]);
    let out = binary()
        .arg("validate")
        .arg(write_config(dir.path(), &bad))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("probes[0].x"));
    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let out = binary()
        .arg("validate")
        .arg(dir.path().join("broken.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn list_presets_names_every_preset() {
    let out = binary().arg("list-presets").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in stochgame::presets::PRESET_NAMES {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let doc = stochgame_cli::load(&path).unwrap();
        stochgame_cli::validate_document(&doc)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn single_precision_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = null_config();
    doc["precision"] = json!("f32");
    doc["pipeline"] = json!([{ "stage": "solve_upper" }, { "stage": "values" }]);
    let outcome = run_document(
        &doc,
        &RunOptions {
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(outcome.exit_status(), 0);
    let value = outcome
        .summary
        .iter()
        .find(|r| r.label.starts_with("upper value"))
        .unwrap();
    assert!((value.estimate - 1.0).abs() < 1e-6);
}
