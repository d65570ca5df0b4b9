//! Acceptance suite: one pass/fail line per criterion, each measured against
//! an independent oracle or an exact invariant.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use stochgame::*;
use stochgame_cli::{run_document, RunOptions, RunOutcome, SummaryRow};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, details: String) -> Outcome {
    if ok {
        Ok(details)
    } else {
        Err(details)
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> Value {
    stochgame_cli::load(&configs_dir().join(name)).unwrap()
}

fn run(
    doc: &Value,
    threads: Option<usize>,
) -> std::result::Result<(RunOutcome, tempfile::TempDir), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        strict: false,
        threads,
    };
    let outcome = run_document(doc, &opts).map_err(|e| e.to_string())?;
    for stage in &outcome.manifest.stages {
        if let Some(err) = &stage.error {
            return Err(format!(
                "stage {} `{}` errored: {err}",
                stage.index, stage.stage
            ));
        }
    }
    Ok((outcome, dir))
}

fn verdict_rows(outcome: &RunOutcome) -> Vec<&SummaryRow> {
    outcome
        .summary
        .iter()
        .filter(|r| r.verdict.is_some())
        .collect()
}

/// Rows whose verdict is `fail`, described for the report line.
fn failures(rows: &[&SummaryRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.verdict == Some(Verdict::Fail))
        .map(|r| {
            format!(
                "{} (slack {:.3e}, se {:.3e})",
                r.label,
                r.slack.unwrap_or(f64::NAN),
                r.std_error
            )
        })
        .collect()
}

fn worst_slack(rows: &[&SummaryRow]) -> f64 {
    rows.iter()
        .filter_map(|r| r.slack)
        .fold(f64::INFINITY, f64::min)
}

fn rule_pair(tau: f64) -> Value {
    json!({ "tau": { "type": "constant", "params": { "time": tau } }, "rho": { "type": "terminal" } })
}

fn solve_preset(name: &str, side: Side, nodes: usize) -> ValueGrid<f64> {
    let p = presets::preset::<f64>(name).unwrap();
    let grid = SpaceTimeGrid::auto_for_problem(&p, vec![Axis::new(-3.0, 3.0, nodes)], 0.9).unwrap();
    solve(&p, side, &grid, Boundary::Extrapolated).unwrap()
}

/// `max { exp(-y^2) : |y - x| <= r }` by brute-force search over `y`.
fn hopf_lax_oracle(x: f64, r: f64) -> f64 {
    let n = 200_000;
    (0..=n)
        .map(|k| x - r + 2.0 * r * k as f64 / n as f64)
        .map(|y| (-y * y).exp())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `E[exp(-(x + sd Z)^2)]` for standard normal `Z`, by composite Simpson
/// quadrature over twelve standard deviations.
fn heat_oracle(x: f64, sd: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let f = |z: f64| {
        let y = x + sd * z;
        (-y * y).exp() * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn hopf_lax_agreement() -> Outcome {
    let probes = [(0.0, 0.0), (0.0, 1.0), (0.5, -0.5)];
    let start = Instant::now();
    let coarse = solve_preset("hopf_lax_asym", Side::Upper, 401);
    let fine = solve_preset("hopf_lax_asym", Side::Upper, 801);
    let elapsed = start.elapsed().as_secs_f64();
    let err = |vg: &ValueGrid<f64>| {
        probes
            .iter()
            .map(|&(t, x)| (vg.value_at(t, &[x]) - hopf_lax_oracle(x, (1.0 - t) / 2.0)).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(&coarse), err(&fine));
    check(
        e1 <= 2e-2 && e2 < e1 && elapsed < 10.0,
        format!("max error {e1:.3e} at 401 nodes (tol 2e-2), {e2:.3e} at 801 nodes, {elapsed:.2} s (limit 10 s)"),
    )
}

fn heat_agreement() -> Outcome {
    let start = Instant::now();
    let vg = solve_preset("heat", Side::Upper, 401);
    let elapsed = start.elapsed().as_secs_f64();
    let oracle = heat_oracle(0.0, 2f64.sqrt());
    let err = (vg.value_at(0.0, &[0.0]) - oracle).abs();
    check(
        err <= 5e-3 && elapsed < 5.0,
        format!(
            "error {err:.3e} against quadrature {oracle:.6} (tol 5e-3), {elapsed:.2} s (limit 5 s)"
        ),
    )
}

fn hamiltonian_ordering() -> Outcome {
    let p = presets::non_isaacs::<f64>().map_err(|e| e.to_string())?;
    let mut exact = true;
    for q in [-3.0, -1.0, 0.0, 1.0, 3.0] {
        let query =
            HamiltonianQuery::first_order(0.3, vec![0.2], vec![q]).map_err(|e| e.to_string())?;
        let up = hamiltonian(&p, Side::Upper, &query)
            .map_err(|e| e.to_string())?
            .value;
        let lo = hamiltonian(&p, Side::Lower, &query)
            .map_err(|e| e.to_string())?
            .value;
        exact &= up == q.abs() && lo == -q.abs();
    }
    let up = solve_preset("non_isaacs", Side::Upper, 401).value_at(0.0, &[0.0]);
    let lo = solve_preset("non_isaacs", Side::Lower, 401).value_at(0.0, &[0.0]);
    let (eu, el) = ((up - 1f64.tanh()).abs(), (lo + 1f64.tanh()).abs());
    check(
        exact && eu <= 2e-2 && el <= 2e-2,
        format!(
            "H+ = |p| and H- = -|p| exactly: {exact}; upper grid error {eu:.3e}, lower grid error {el:.3e} (tol 2e-2)"
        ),
    )
}

fn value_ordering() -> Outcome {
    let mut draws = 0;
    let mut worst = f64::INFINITY;
    for name in presets::PRESET_NAMES {
        let p = presets::preset::<f64>(name).map_err(|e| e.to_string())?;
        for k in 0..20 {
            let seed = draws as u64;
            let spec = |count, seed| RandomFamilySpec {
                count,
                seed,
                state_box: vec![(-2.0, 2.0)],
                horizon: 1.0,
                max_switches: 3,
            };
            let family =
                |player: Player, seed: u64| -> Result<StrategyFamily<f64>> {
                    let controls = p.controls(player).clone();
                    StrategyFamily::constants(player, controls.clone())?
                        .union(&StrategyFamily::random(player, controls, &spec(3, seed))?)
                };
            let fu = family(Player::One, seed).map_err(|e| e.to_string())?;
            let fv = family(Player::Two, seed ^ 0x5555).map_err(|e| e.to_string())?;
            let x = 0.2 * k as f64 / 20.0 - 0.1;
            let cfg = SimulationConfig::new(10, seed, 16);
            let r = upper_lower_values(&p, &fu, &fv, 0.0, &[x], &cfg).map_err(|e| e.to_string())?;
            worst = worst.min(r.v_plus - r.v_minus);
            draws += 1;
        }
    }
    check(
        worst >= 0.0,
        format!("{draws} draws over every preset, min (V+ - V-) = {worst:.3e} (tol 0)"),
    )
}

fn sandwich() -> Outcome {
    let constants = json!({
        "stage": "certify",
        "pairs": [rule_pair(0.0)],
        "candidates": [
            { "kind": "constant", "name": "sup_g_upper", "class": "super_upper" },
            { "kind": "constant", "name": "sup_g_lower", "class": "super_lower" },
            { "kind": "constant", "name": "inf_g_upper", "class": "sub_upper" },
            { "kind": "constant", "name": "inf_g_lower", "class": "sub_lower" }
        ]
    });
    let mut hopf = shipped("hopf_lax.json");
    let both =
        json!({ "constants": false, "pde_feedback": [{ "side": "upper" }, { "side": "lower" }] });
    hopf["families"] = json!({ "u": both, "v": both });
    hopf["pipeline"] = json!([{ "stage": "solve_upper" }, { "stage": "solve_lower" }, { "stage": "values" }, constants]);
    let mut non_isaacs = shipped("non_isaacs.json");
    non_isaacs["pipeline"]
        .as_array_mut()
        .unwrap()
        .push(constants.clone());

    let mut details = Vec::new();
    let mut ok = true;
    for doc in [hopf, non_isaacs] {
        let (outcome, _dir) = run(&doc, None)?;
        let rows = verdict_rows(&outcome);
        let exact: Vec<&SummaryRow> = rows
            .iter()
            .copied()
            .filter(|r| r.label.starts_with("inf g <= V-") || r.stage == "certify")
            .collect();
        let constant_ok = exact.iter().all(|r| r.verdict == Some(Verdict::Pass))
            && exact
                .iter()
                .filter(|r| r.stage == "certify")
                .all(|r| r.std_error == 0.0);
        let grid: Vec<&SummaryRow> = rows
            .iter()
            .copied()
            .filter(|r| r.label.contains("grid"))
            .collect();
        let grid_fail = failures(&grid);
        ok &= constant_ok && grid_fail.is_empty() && grid.len() >= 2 && exact.len() >= 5;
        details.push(format!(
            "{}: {} exact constant checks {}, grid brackets worst slack {:.3e} (tol 2e-2 + 3 SE){}",
            doc["name"].as_str().unwrap_or("?"),
            exact.len(),
            if constant_ok { "hold" } else { "violated" },
            worst_slack(&grid),
            if grid_fail.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", grid_fail.join("; "))
            }
        ));
    }
    check(ok, details.join("; "))
}

fn dpp_residual_check() -> Outcome {
    let mut doc = shipped("hopf_lax.json");
    doc["mc"] = json!({ "seed": 7, "batch": 20000, "steps": 50 });
    doc["probes"] = json!([{ "t": 0.0, "x": [1.0] }]);
    doc["families"] = json!({
        "u": { "constants": true },
        "v": { "constants": true, "pde_feedback": [{ "side": "upper" }] }
    });
    doc["pipeline"] =
        json!([{ "stage": "solve_upper" }, { "stage": "dpp", "radius": 0.5, "tolerance": 0.03 }]);
    let (outcome, _dir) = run(&doc, None)?;
    let elapsed = outcome.manifest.total_wall_time_s;
    let rows = verdict_rows(&outcome);
    let row = rows.iter().find(|r| r.stage == "dpp").ok_or("no dpp row")?;
    check(
        row.verdict != Some(Verdict::Fail) && elapsed < 60.0,
        format!(
            "residual slack {:.3e} (tol 3e-2 + 3 SE, SE {:.3e}), verdict {}, 20000 paths, {elapsed:.1} s (limit 60 s)",
            row.slack.unwrap_or(f64::NAN),
            row.std_error,
            row.verdict.unwrap()
        ),
    )
}

fn epsilon_saddle() -> Outcome {
    let mut doc = shipped("hopf_lax.json");
    let saddle = doc["pipeline"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["stage"] == "saddle")
        .cloned()
        .ok_or("shipped config has no saddle stage")?;
    doc["pipeline"] = json!([{ "stage": "solve_upper" }, saddle]);
    let (outcome, _dir) = run(&doc, None)?;
    let elapsed = outcome.manifest.total_wall_time_s;
    let rows = verdict_rows(&outcome);
    let fails = failures(&rows);
    check(
        fails.is_empty() && rows.len() == 3 && elapsed < 120.0,
        format!(
            "{} probes, 50 deviations per side, worst slack {:.3e} (eps 3e-2 + 3 SE), {elapsed:.1} s (limit 120 s){}",
            rows.len(),
            worst_slack(&rows),
            if fails.is_empty() { String::new() } else { format!(", failing: {}", fails.join("; ")) }
        ),
    )
}

fn certification() -> Outcome {
    let mut doc = shipped("hopf_lax.json");
    let certify: Vec<Value> = doc["pipeline"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["stage"] == "certify")
        .cloned()
        .collect();
    let mut pipeline = vec![json!({ "stage": "solve_upper" })];
    pipeline.extend(certify);
    doc["pipeline"] = Value::Array(pipeline);
    let (outcome, _dir) = run(&doc, None)?;
    let rows = verdict_rows(&outcome);
    let by_name: BTreeMap<String, &SummaryRow> = rows
        .iter()
        .map(|r| {
            (
                r.label.split(' ').next().unwrap_or_default().to_string(),
                *r,
            )
        })
        .collect();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, exact) in [
        ("sup_g", true),
        ("inf_g", true),
        ("upper_extrapolated", false),
        ("upper_clamped", false),
        ("upper_min", false),
        ("lowered", false),
        ("raised", false),
    ] {
        let Some(r) = by_name.get(name) else {
            ok = false;
            details.push(format!("{name} missing"));
            continue;
        };
        let good = if exact {
            r.verdict == Some(Verdict::Pass) && r.std_error == 0.0
        } else {
            r.verdict != Some(Verdict::Fail)
        };
        ok &= good;
        details.push(format!(
            "{name} {} (slack {:.3e}, se {:.3e})",
            r.verdict.unwrap(),
            r.slack.unwrap_or(f64::NAN),
            r.std_error
        ));
    }
    check(ok, format!("{} (tol 2e-2 + 3 SE)", details.join(", ")))
}

fn artifact_bytes(dir: &Path) -> std::result::Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".grid.csv") || name.ends_with(".cert.json") {
            files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let doc = json!({
        "name": "determinism",
        "problem": { "preset": "controlled_vol" },
        "grid": { "axes": [{ "lo": -3.0, "hi": 3.0, "nodes": 101 }] },
        "mc": { "seed": 5, "batch": 400, "steps": 50 },
        "probes": [{ "t": 0.0, "x": [0.0] }, { "t": 0.5, "x": [0.4] }],
        "families": {
            "u": { "random": { "count": 4, "seed": 1 } },
            "v": { "random": { "count": 4, "seed": 2 } }
        },
        "pipeline": [
            { "stage": "solve_upper" },
            { "stage": "values" },
            {
                "stage": "certify",
                "batch": 100,
                "pairs": [rule_pair(0.0), rule_pair(0.5)],
                "candidates": [
                    { "kind": "constant", "name": "sup_g", "class": "super_upper" },
                    { "kind": "solved", "name": "upper", "class": "super_upper" }
                ]
            }
        ]
    });
    let runs = [Some(1), Some(1), Some(4)]
        .into_iter()
        .map(|threads| {
            let (outcome, dir) = run(&doc, threads)?;
            artifact_bytes(&outcome.out_dir).map(|files| (files, dir))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let reference = &runs[0].0;
    let same = runs.iter().all(|(files, _)| files == reference);
    let bytes: usize = reference.values().map(Vec::len).sum();
    check(
        same && reference.len() >= 5,
        format!(
            "{} artifacts ({bytes} bytes) byte-identical across two 1-thread runs and a 4-thread run: {same}",
            reference.len()
        ),
    )
}

fn mixed_problem(payoff: impl Fn(f64) -> f64 + Send + Sync + 'static) -> GameProblem<f64> {
    let coeffs = FnCoefficients::new(
        |_t, _x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] + v[0],
        |_t, x: &[f64], u: &[f64], _v: &[f64], out: &mut [f64]| {
            out[0] = 0.4 + 0.3 * u[0].abs() * x[0].cos()
        },
        move |x: &[f64]| payoff(x[0]),
    );
    GameProblem::new(
        "mixed",
        1,
        1,
        Arc::new(coeffs),
        ControlSet::linspace("U", -1.0, 1.0, 5).unwrap(),
        ControlSet::linspace("V", -0.5, 0.5, 3).unwrap(),
        1.0,
        (-3.0, 3.0),
    )
    .unwrap()
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut violations = 0usize;
    let mut compared = 0usize;
    for _ in 0..10 {
        let (amp, freq, width, center, lift) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.2..2.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(0.0..0.5),
        );
        let g1 = move |x: f64| amp * (freq * x).sin() * (-width * x * x).exp();
        let g2 = move |x: f64| g1(x) + lift * (-(x - center) * (x - center)).exp();
        let (p1, p2) = (mixed_problem(g1), mixed_problem(g2));
        let grid = SpaceTimeGrid::auto_for_problem(&p1, vec![Axis::new(-2.0, 2.0, 81)], 0.9)
            .map_err(|e| e.to_string())?;
        for side in [Side::Upper, Side::Lower] {
            let v1 = solve(&p1, side, &grid, Boundary::Extrapolated).map_err(|e| e.to_string())?;
            let v2 = solve(&p2, side, &grid, Boundary::Extrapolated).map_err(|e| e.to_string())?;
            for (a, b) in v1.values().values().iter().zip(v2.values().values()) {
                violations += usize::from(a > b);
                compared += 1;
            }
        }
    }
    let c = 0.731;
    let flat = mixed_problem(move |_| c);
    let grid = SpaceTimeGrid::auto_for_problem(&flat, vec![Axis::new(-2.0, 2.0, 81)], 0.9)
        .map_err(|e| e.to_string())?;
    let mut per_step = 0.0f64;
    let mut accumulated = 0.0f64;
    for side in [Side::Upper, Side::Lower] {
        let vg = solve(&flat, side, &grid, Boundary::Extrapolated).map_err(|e| e.to_string())?;
        let values = vg.values();
        for level in 0..grid.n_levels() {
            for (node, &v) in values.level(level).iter().enumerate() {
                accumulated = accumulated.max((v - c).abs());
                if level + 1 < grid.n_levels() {
                    per_step = per_step.max((v - values.at(level + 1, node)).abs());
                }
            }
        }
    }
    check(
        violations == 0 && per_step <= 1e-12 && accumulated <= 1e-9,
        format!(
            "{violations} order violations in {compared} comparisons (tol 0); constant data drift {per_step:.1e} per step (tol 1e-12), {accumulated:.1e} accumulated (tol 1e-9)"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Hopf-Lax agreement", hopf_lax_agreement),
        ("heat-kernel agreement", heat_agreement),
        (
            "Hamiltonian ordering and non-Isaacs gap",
            hamiltonian_ordering,
        ),
        ("value ordering", value_ordering),
        ("sandwich chain", sandwich),
        ("DPP residual", dpp_residual_check),
        ("epsilon-saddle", epsilon_saddle),
        ("semi-solution certification", certification),
        ("determinism", determinism),
        ("scheme monotonicity and max principle", monotonicity),
    ];
    let mut failed = Vec::new();
    for (k, (title, criterion)) in criteria.iter().enumerate() {
        let n = k + 1;
        let outcome =
            std::panic::catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".into()));
        let (status, details) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(n);
                ("FAIL", d)
            }
        };
        println!("criterion {n}: {status} {title}: {details}");
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
