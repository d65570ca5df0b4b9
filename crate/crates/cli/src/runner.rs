//! Stage execution, artifact files, the manifest and the summary table.
//!
//! Artifacts are written single-threaded after each stage; their names carry
//! the stage index so that repeated stages never collide. Grid CSVs and
//! certificate JSONs depend only on the configuration, never on timing or
//! the thread count.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use stochgame::sde::fmt_num;
use stochgame::{
    bump_sub, bump_super, certify, check_saddle, dpp_residual, extract_feedback, lattice_combine,
    solve, upper_lower_values, Boundary, CertifySpec, FamilySpec, GameProblem, GridFunction,
    Player, RandomFamilySpec, Scalar, SemiSolutionCandidate, Side, SpaceTimeGrid, StoppingRule,
    StrategyFamily, StrategyPair, ValueGrid, Verdict, WitnessProducer,
};

use crate::config::{
    self, CandidateConfig, ExperimentConfig, FamilyConfig, Precision, Probe, StageConfig,
};
use crate::error::CliError;

/// Command-line overrides of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory, replacing the configured one.
    pub out: Option<PathBuf>,
    /// Treat inconclusive verdicts as failures.
    pub strict: bool,
    /// Worker threads; the global pool when absent.
    pub threads: Option<usize>,
}

/// One line of `summary.csv`. Rows without a verdict are informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub stage_index: usize,
    pub stage: String,
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub threshold: Option<f64>,
    pub slack: Option<f64>,
    pub verdict: Option<Verdict>,
    pub artifact: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Error,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub stage: String,
    pub status: StageStatus,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub library_version: String,
    pub config: Value,
    pub precision: Precision,
    pub strict: bool,
    pub threads: Option<usize>,
    pub seeds: Vec<u64>,
    pub stages: Vec<StageRecord>,
    pub total_wall_time_s: f64,
    pub exit_status: i32,
}

/// Result of a completed run (stage errors included).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Vec<SummaryRow>,
}

impl RunOutcome {
    pub fn exit_status(&self) -> i32 {
        self.manifest.exit_status
    }
}

/// Reads a configuration file into a raw JSON document.
pub fn load(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Parses and validates a raw document in its declared precision.
pub fn validate_document(doc: &Value) -> Result<Precision, CliError> {
    let precision = config::precision_of(doc)?;
    match precision {
        Precision::F64 => config::parse::<f64>(doc)?.validate()?,
        Precision::F32 => config::parse::<f32>(doc)?.validate()?,
    }
    Ok(precision)
}

/// Validates and runs a raw document.
pub fn run_document(doc: &Value, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let precision = validate_document(doc)?;
    let go = || match precision {
        Precision::F64 => run_typed(config::parse::<f64>(doc)?, doc, opts),
        Precision::F32 => run_typed(config::parse::<f32>(doc)?, doc, opts),
    };
    match opts.threads {
        None => go(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(go),
    }
}

fn run_typed<S: Scalar>(
    cfg: ExperimentConfig<S>,
    doc: &Value,
    opts: &RunOptions,
) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let out_dir = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;
    let problem = cfg.problem.build::<S>()?;
    let mut ctx = Context {
        cfg: &cfg,
        problem,
        grids: Vec::new(),
        out_dir: out_dir.clone(),
        seeds: BTreeSet::from([cfg.mc.seed]),
    };
    let mut summary = Vec::new();
    let mut records = Vec::new();
    let mut halted = false;
    for (index, stage) in cfg.pipeline.iter().enumerate() {
        if halted {
            records.push(StageRecord {
                index,
                stage: stage.name().into(),
                status: StageStatus::NotRun,
                error: None,
                wall_time_s: 0.0,
                artifacts: Vec::new(),
                verdict: None,
            });
            continue;
        }
        let t0 = Instant::now();
        let mut out = StageOutput::default();
        let result = ctx.run_stage(index, stage, &mut out);
        let verdict = out
            .rows
            .iter()
            .filter_map(|r| r.verdict)
            .reduce(Verdict::worst);
        let (status, error) = match result {
            Ok(()) => (StageStatus::Ok, None),
            Err(e) => {
                halted = true;
                (StageStatus::Error, Some(e.to_string()))
            }
        };
        records.push(StageRecord {
            index,
            stage: stage.name().into(),
            status,
            error,
            wall_time_s: t0.elapsed().as_secs_f64(),
            artifacts: out.artifacts,
            verdict,
        });
        summary.extend(out.rows);
    }
    let exit_status = exit_status(&records, &summary, opts.strict);
    write_summary(&out_dir.join("summary.csv"), &summary)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: stochgame::VERSION.into(),
        config: doc.clone(),
        precision: cfg.precision,
        strict: opts.strict,
        threads: opts.threads,
        seeds: ctx.seeds.iter().copied().collect(),
        stages: records,
        total_wall_time_s: started.elapsed().as_secs_f64(),
        exit_status,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome {
        out_dir,
        manifest,
        summary,
    })
}

/// Zero iff no stage errored and every verdict is pass or (unless strict)
/// inconclusive.
pub fn exit_status(records: &[StageRecord], summary: &[SummaryRow], strict: bool) -> i32 {
    let errored = records.iter().any(|r| r.status == StageStatus::Error);
    let failed = summary.iter().filter_map(|r| r.verdict).any(|v| match v {
        Verdict::Pass => false,
        Verdict::Inconclusive => strict,
        Verdict::Fail => true,
    });
    i32::from(errored || failed)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(format!("writing {}", path.display()), e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "stage_index",
        "stage",
        "label",
        "estimate",
        "std_error",
        "threshold",
        "slack",
        "verdict",
        "artifact",
    ])
    .map_err(io)?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.stage_index.to_string(),
            r.stage.clone(),
            r.label.clone(),
            fmt_num(r.estimate),
            fmt_num(r.std_error),
            opt(r.threshold),
            opt(r.slack),
            r.verdict.map(|v| v.to_string()).unwrap_or_default(),
            r.artifact.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// A pass/fail check or an informational value reported by a stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct Check {
    label: String,
    estimate: f64,
    std_error: f64,
    threshold: Option<f64>,
    slack: Option<f64>,
    verdict: Option<Verdict>,
}

impl Check {
    fn info(label: impl Into<String>, estimate: f64) -> Self {
        Self {
            label: label.into(),
            estimate,
            std_error: 0.0,
            threshold: None,
            slack: None,
            verdict: None,
        }
    }

    fn banded(
        label: impl Into<String>,
        estimate: f64,
        std_error: f64,
        threshold: f64,
        slack: f64,
    ) -> Self {
        Self {
            label: label.into(),
            estimate,
            std_error,
            threshold: Some(threshold),
            slack: Some(slack),
            verdict: Some(Verdict::from_slack(slack, threshold, std_error)),
        }
    }

    fn from_report(label: impl Into<String>, r: &stochgame::CertificateReport) -> Self {
        Self {
            label: label.into(),
            estimate: r.estimate,
            std_error: r.std_error,
            threshold: Some(r.threshold),
            slack: Some(r.slack),
            verdict: Some(r.verdict),
        }
    }
}

#[derive(Default)]
struct StageOutput {
    artifacts: Vec<String>,
    rows: Vec<SummaryRow>,
}

#[derive(Serialize)]
struct ProbeArtifact<'a, T: Serialize> {
    stage: &'a str,
    probe: &'a Probe,
    checks: &'a [Check],
    result: T,
}

type GridCache<S> = Vec<((Side, Boundary), Arc<ValueGrid<S>>)>;

struct Context<'a, S: Scalar> {
    cfg: &'a ExperimentConfig<S>,
    problem: GameProblem<S>,
    grids: GridCache<S>,
    out_dir: PathBuf,
    seeds: BTreeSet<u64>,
}

fn probe_label(p: &Probe) -> String {
    let xs: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
    format!("(t={}, x=[{}])", p.t, xs.join(", "))
}

fn decision_times<S: Scalar>(horizon: S, n: usize) -> Vec<S> {
    (0..n)
        .map(|k| horizon * S::c(k as f64) / S::c(n as f64))
        .collect()
}

impl<S: Scalar> Context<'_, S> {
    fn run_stage(
        &mut self,
        index: usize,
        stage: &StageConfig<S>,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        match stage {
            StageConfig::SolveUpper => self.solve_stage(index, Side::Upper, out),
            StageConfig::SolveLower => self.solve_stage(index, Side::Lower, out),
            StageConfig::Values { grid_tolerance } => {
                self.values_stage(index, *grid_tolerance, out)
            }
            StageConfig::Dpp {
                side,
                radius,
                cap,
                tolerance,
            } => self.dpp_stage(index, *side, *radius, *cap, *tolerance, out),
            StageConfig::Saddle {
                decisions,
                deviations,
                max_switches,
                seed,
                epsilon,
            } => self.saddle_stage(
                index,
                *decisions,
                *deviations,
                *max_switches,
                *seed,
                *epsilon,
                out,
            ),
            StageConfig::Certify { .. } => self.certify_stage(index, stage, out),
            StageConfig::ConvergenceSweep {
                side,
                nodes,
                reference,
            } => self.sweep_stage(index, *side, nodes, reference.as_deref(), out),
        }
    }

    fn emit(
        &self,
        index: usize,
        stage: &str,
        checks: &[Check],
        artifact: &str,
        out: &mut StageOutput,
    ) {
        out.rows.extend(checks.iter().map(|c| SummaryRow {
            stage_index: index,
            stage: stage.into(),
            label: c.label.clone(),
            estimate: c.estimate,
            std_error: c.std_error,
            threshold: c.threshold,
            slack: c.slack,
            verdict: c.verdict,
            artifact: artifact.into(),
        }));
    }

    fn write_artifact(
        &self,
        name: String,
        value: &impl Serialize,
        out: &mut StageOutput,
    ) -> Result<String, CliError> {
        write_json(&self.out_dir.join(&name), value)?;
        out.artifacts.push(name.clone());
        Ok(name)
    }

    fn write_grid(
        &self,
        name: String,
        vg: &ValueGrid<S>,
        out: &mut StageOutput,
    ) -> Result<String, CliError> {
        let path = self.out_dir.join(&name);
        let file = fs::File::create(&path)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        vg.write_csv_levels(&mut w, &vg.strided_levels(self.cfg.grid.csv_levels))
            .and_then(|_| std::io::Write::flush(&mut w))
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        out.artifacts.push(name.clone());
        Ok(name)
    }

    fn horizon(&self) -> S {
        self.problem.horizon()
    }

    fn point(&self, p: &Probe) -> (S, Vec<S>) {
        (S::c(p.t), p.x.iter().map(|&v| S::c(v)).collect())
    }

    fn state_box(&self) -> Vec<(f64, f64)> {
        self.cfg.grid.axes.iter().map(|a| (a.lo, a.hi)).collect()
    }

    fn cached(&self, side: Side, boundary: Boundary) -> Option<Arc<ValueGrid<S>>> {
        self.grids
            .iter()
            .find(|(k, _)| *k == (side, boundary))
            .map(|(_, vg)| vg.clone())
    }

    fn solved(&self, side: Side) -> Result<Arc<ValueGrid<S>>, CliError> {
        self.cached(side, self.cfg.grid.boundary).ok_or_else(|| {
            stochgame::GameError::Precondition(format!(
                "no solved {side} grid with the configured boundary"
            ))
            .into()
        })
    }

    fn solve_grid(
        &self,
        side: Side,
        boundary: Boundary,
        nodes: Option<usize>,
    ) -> Result<ValueGrid<S>, CliError> {
        let grid: SpaceTimeGrid<S> = self.cfg.grid.build(&self.problem, nodes)?;
        Ok(solve(&self.problem, side, &grid, boundary)?)
    }

    fn solve_stage(
        &mut self,
        index: usize,
        side: Side,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let boundary = self.cfg.grid.boundary;
        let vg = self.solve_grid(side, boundary, None)?;
        let name = self.write_grid(format!("{index:02}_{side}.grid.csv"), &vg, out)?;
        let cfl = vg.cfl();
        let mut checks = vec![
            Check::info(format!("{side} time steps"), vg.grid().n_t() as f64),
            Check::info(format!("{side} courant number"), cfl.courant),
        ];
        for p in &self.cfg.probes {
            let (t, x) = self.point(p);
            checks.push(Check::info(
                format!("{side} value at {}", probe_label(p)),
                vg.value_at(t, &x).f64(),
            ));
        }
        self.emit(index, &format!("solve_{side}"), &checks, &name, out);
        self.grids.retain(|(k, _)| *k != (side, boundary));
        self.grids.push(((side, boundary), Arc::new(vg)));
        Ok(())
    }

    fn family(&mut self, player: Player, f: &FamilyConfig) -> Result<StrategyFamily<S>, CliError> {
        let controls = self.problem.controls(player).clone();
        let mut parts = Vec::new();
        if f.constants {
            parts.push(StrategyFamily::constants(player, controls.clone())?);
        }
        if let Some(r) = &f.random {
            self.seeds.insert(r.seed);
            let spec = RandomFamilySpec {
                count: r.count,
                seed: r.seed,
                state_box: self.state_box(),
                horizon: self.horizon().f64(),
                max_switches: r.max_switches,
            };
            parts.push(StrategyFamily::random(player, controls.clone(), &spec)?);
        }
        for m in &f.pde_feedback {
            let vg = self.solved(m.side)?;
            let (su, sv) = extract_feedback(&vg, &decision_times(self.horizon(), m.decisions))?;
            let s = if player == Player::One { su } else { sv };
            parts.push(StrategyFamily::singleton(
                s,
                FamilySpec::PdeFeedback {
                    side: m.side,
                    decisions: m.decisions,
                },
            )?);
        }
        let mut it = parts.into_iter();
        let first = it
            .next()
            .ok_or_else(|| stochgame::GameError::InvalidArgument("empty strategy family".into()))?;
        it.try_fold(first, |acc, f| acc.union(&f))
            .map_err(Into::into)
    }

    fn values_stage(
        &mut self,
        index: usize,
        grid_tolerance: f64,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let cfg = self.cfg;
        let fu = self.family(Player::One, &cfg.families.u)?;
        let fv = self.family(Player::Two, &cfg.families.v)?;
        let sim = self.cfg.mc.simulation();
        let (g_lo, g_hi) = self.problem.payoff_bounds();
        let upper = self.cached(Side::Upper, self.cfg.grid.boundary);
        let lower = self.cached(Side::Lower, self.cfg.grid.boundary);
        for (k, p) in self.cfg.probes.iter().enumerate() {
            let (t, x) = self.point(p);
            let r = upper_lower_values(&self.problem, &fu, &fv, t, &x, &sim)?;
            let at = probe_label(p);
            let mut checks = vec![
                Check::info(format!("V+ estimate at {at}"), r.v_plus),
                Check::info(format!("V- estimate at {at}"), r.v_minus),
                Check::banded(
                    format!("V- <= V+ at {at}"),
                    r.v_plus - r.v_minus,
                    0.0,
                    0.0,
                    r.v_plus - r.v_minus,
                ),
                Check::banded(
                    format!("inf g <= V- and V+ <= sup g at {at}"),
                    r.v_plus,
                    0.0,
                    0.0,
                    (r.v_minus - g_lo.f64()).min(g_hi.f64() - r.v_plus),
                ),
            ];
            if let Some(vg) = &upper {
                let w = vg.value_at(t, &x).f64();
                checks.push(Check::banded(
                    format!("V+ <= upper grid at {at}"),
                    r.v_plus,
                    r.v_plus_se,
                    grid_tolerance,
                    w - r.v_plus,
                ));
            }
            if let Some(vg) = &lower {
                let w = vg.value_at(t, &x).f64();
                checks.push(Check::banded(
                    format!("lower grid <= V- at {at}"),
                    r.v_minus,
                    r.v_minus_se,
                    grid_tolerance,
                    r.v_minus - w,
                ));
            }
            let art = ProbeArtifact {
                stage: "values",
                probe: p,
                checks: &checks,
                result: serde_json::json!({
                    "families": [fu.spec_label(), fv.spec_label()],
                    "seed": sim.rng_seed,
                    "values": &r,
                }),
            };
            let name =
                self.write_artifact(format!("{index:02}_values_p{k}.cert.json"), &art, out)?;
            self.emit(index, "values", &checks, &name, out);
        }
        Ok(())
    }

    fn dpp_stage(
        &mut self,
        index: usize,
        side: Side,
        radius: f64,
        cap: Option<f64>,
        tolerance: f64,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let vg = self.solved(side)?;
        let cfg = self.cfg;
        let fu = self.family(Player::One, &cfg.families.u)?;
        let fv = self.family(Player::Two, &cfg.families.v)?;
        let sim = self.cfg.mc.simulation();
        let cap = cap.map(S::c).unwrap_or(self.horizon() / S::c(2.0));
        for (k, p) in self.cfg.probes.iter().enumerate() {
            let (t, x) = self.point(p);
            let rho = StoppingRule::first_exit(x.clone(), S::c(radius), StoppingRule::constant(t))?
                .min(StoppingRule::constant(cap));
            let report = dpp_residual(&vg, &rho, &self.problem, &sim, &fu, &fv, t, &x, tolerance)?;
            let checks = vec![Check::from_report(
                format!("dpp residual at {}", probe_label(p)),
                &report,
            )];
            let art = ProbeArtifact {
                stage: "dpp",
                probe: p,
                checks: &checks,
                result: &report,
            };
            let name = self.write_artifact(format!("{index:02}_dpp_p{k}.cert.json"), &art, out)?;
            self.emit(index, "dpp", &checks, &name, out);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn saddle_stage(
        &mut self,
        index: usize,
        decisions: usize,
        deviations: usize,
        max_switches: usize,
        seed: Option<u64>,
        epsilon: f64,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let vg = self.solved(Side::Upper)?;
        let (su, sv) = extract_feedback(&vg, &decision_times(self.horizon(), decisions))?;
        let pair = StrategyPair::new(su, sv)?;
        let seed = seed.unwrap_or(self.cfg.mc.seed);
        let spec = |seed| RandomFamilySpec {
            count: deviations,
            seed,
            state_box: self.state_box(),
            horizon: self.horizon().f64(),
            max_switches,
        };
        let du = StrategyFamily::random(Player::One, self.problem.u_set().clone(), &spec(seed))?;
        let dv = StrategyFamily::random(
            Player::Two,
            self.problem.v_set().clone(),
            &spec(seed.wrapping_add(1)),
        )?;
        self.seeds.extend([seed, seed.wrapping_add(1)]);
        let sim = self.cfg.mc.simulation();
        for (k, p) in self.cfg.probes.iter().enumerate() {
            let (t, x) = self.point(p);
            let report = check_saddle(&self.problem, &pair, &du, &dv, t, &x, &sim, epsilon)?;
            let checks = vec![Check::from_report(
                format!("saddle deviations at {}", probe_label(p)),
                &report,
            )];
            let art = ProbeArtifact {
                stage: "saddle",
                probe: p,
                checks: &checks,
                result: &report,
            };
            let name =
                self.write_artifact(format!("{index:02}_saddle_p{k}.cert.json"), &art, out)?;
            self.emit(index, "saddle", &checks, &name, out);
        }
        Ok(())
    }

    fn candidate(
        &mut self,
        index: usize,
        spec: &CandidateConfig<S>,
        built: &[(String, SemiSolutionCandidate<S>)],
        out: &mut StageOutput,
    ) -> Result<SemiSolutionCandidate<S>, CliError> {
        let find = |name: &str| -> Result<&SemiSolutionCandidate<S>, CliError> {
            built
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, c)| c)
                .ok_or_else(|| {
                    stochgame::GameError::Candidate(format!("unknown candidate `{name}`")).into()
                })
        };
        Ok(match spec {
            CandidateConfig::Constant {
                class,
                value,
                witness_index,
                ..
            } => {
                let (lo, hi) = self.problem.payoff_bounds();
                let value = value
                    .map(S::c)
                    .unwrap_or(if class.is_super() { hi } else { lo });
                let grid = self.cfg.grid.build(&self.problem, None)?;
                SemiSolutionCandidate::constant(&self.problem, grid, value, *class, *witness_index)?
            }
            CandidateConfig::Polynomial {
                class,
                w,
                witness_index,
                ..
            } => {
                let grid = self.cfg.grid.build(&self.problem, None)?;
                let w = GridFunction::from_fn(grid, |t, x| w.eval(t, x));
                let bound = w.max_value().abs().max(w.min_value().abs());
                let witness = WitnessProducer::Constant {
                    index: *witness_index,
                };
                SemiSolutionCandidate::new(&self.problem, Arc::new(w), *class, witness, bound)?
            }
            CandidateConfig::Solved {
                name,
                class,
                boundary,
                decisions,
            } => {
                let side = class.side();
                let boundary = boundary.unwrap_or(self.cfg.grid.boundary);
                let vg = match self.cached(side, boundary) {
                    Some(vg) => vg,
                    None => {
                        let vg = Arc::new(self.solve_grid(side, boundary, None)?);
                        self.write_grid(format!("{index:02}_{name}.grid.csv"), &vg, out)?;
                        self.grids.push(((side, boundary), vg.clone()));
                        vg
                    }
                };
                let witness = WitnessProducer::from_value_grid(
                    &vg,
                    class.witness_player(),
                    decision_times(self.horizon(), *decisions),
                )?;
                let w: GridFunction<S> = vg.values().clone();
                let bound = w.max_value().abs().max(w.min_value().abs());
                SemiSolutionCandidate::new(&self.problem, Arc::new(w), *class, witness, bound)?
            }
            CandidateConfig::Lattice { of, .. } => lattice_combine(find(&of[0])?, find(&of[1])?)?,
            CandidateConfig::BumpSuper { base, bump, .. } => {
                bump_super(find(base)?, &self.problem, bump)?
            }
            CandidateConfig::BumpSub {
                base, bump, map, ..
            } => bump_sub(find(base)?, &self.problem, bump, map)?,
        })
    }

    fn certify_stage(
        &mut self,
        index: usize,
        stage: &StageConfig<S>,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let StageConfig::Certify {
            candidates,
            pairs,
            starts,
            threshold,
            opponents,
            prefixes,
            bins_per_dim,
            min_occupancy,
            batch,
        } = stage
        else {
            unreachable!("certify_stage called with another stage");
        };
        let starts: Vec<(S, Vec<S>)> = starts
            .as_ref()
            .unwrap_or(&self.cfg.probes)
            .iter()
            .map(|p| self.point(p))
            .collect();
        let pairs: Vec<(StoppingRule<S>, StoppingRule<S>)> = pairs
            .iter()
            .map(|p| (p.tau.clone(), p.rho.clone()))
            .collect();
        let mut sim = self.cfg.mc.simulation();
        if let Some(b) = batch {
            sim.batch_size = *b;
        }
        let mut built: Vec<(String, SemiSolutionCandidate<S>)> = Vec::new();
        for spec in candidates {
            let c = self.candidate(index, spec, &built, out)?;
            let wp = c.class().witness_player();
            let mut cs = CertifySpec::new(
                pairs.clone(),
                self.family(wp.opponent(), opponents)?,
                self.family(wp, prefixes)?,
                starts.clone(),
                sim.clone(),
                *threshold,
            );
            cs.bins_per_dim = *bins_per_dim;
            cs.min_occupancy = *min_occupancy;
            let report = certify(&c, &self.problem, &cs)?;
            let label = format!("{} certifies as {}", spec.name(), c.class());
            let checks = vec![Check::from_report(label, &report)];
            let art = serde_json::json!({
                "stage": "certify",
                "candidate": spec.name(),
                "class": c.class(),
                "witness": c.witness().label(),
                "bound": c.bound().f64(),
                "checks": &checks,
                "result": &report,
            });
            let name =
                self.write_artifact(format!("{index:02}_{}.cert.json", spec.name()), &art, out)?;
            self.emit(index, "certify", &checks, &name, out);
            built.push((spec.name().to_string(), c));
        }
        Ok(())
    }

    fn sweep_stage(
        &mut self,
        index: usize,
        side: Side,
        nodes: &[usize],
        reference: Option<&[f64]>,
        out: &mut StageOutput,
    ) -> Result<(), CliError> {
        let mut table: Vec<Vec<f64>> = Vec::new();
        let mut checks = Vec::new();
        for &n in nodes {
            let vg = self.solve_grid(side, self.cfg.grid.boundary, Some(n))?;
            let row: Vec<f64> = self
                .cfg
                .probes
                .iter()
                .map(|p| {
                    let (t, x) = self.point(p);
                    vg.value_at(t, &x).f64()
                })
                .collect();
            for (p, v) in self.cfg.probes.iter().zip(&row) {
                checks.push(Check::info(
                    format!("{side} value at {} with {n} nodes", probe_label(p)),
                    *v,
                ));
            }
            table.push(row);
        }
        let max_diff = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let (errors, what): (Vec<f64>, &str) = match reference {
            Some(r) => (
                table.iter().map(|row| max_diff(row, r)).collect(),
                "error against reference",
            ),
            None => (
                table.windows(2).map(|w| max_diff(&w[0], &w[1])).collect(),
                "change on refinement",
            ),
        };
        for (i, e) in errors.iter().enumerate() {
            checks.push(Check::info(format!("{what} #{i}"), *e));
        }
        if errors.len() >= 2 {
            let slack = errors
                .windows(2)
                .map(|w| w[0] - w[1])
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::banded(
                format!("{what} decreases with refinement"),
                errors[errors.len() - 1],
                0.0,
                0.0,
                slack,
            ));
        }
        let art = serde_json::json!({
            "stage": "convergence_sweep",
            "side": side,
            "nodes": nodes,
            "probes": &self.cfg.probes,
            "values": &table,
            "reference": reference,
            "checks": &checks,
        });
        let name = self.write_artifact(format!("{index:02}_convergence.cert.json"), &art, out)?;
        self.emit(index, "convergence_sweep", &checks, &name, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(status: StageStatus) -> StageRecord {
        StageRecord {
            index: 0,
            stage: "x".into(),
            status,
            error: None,
            wall_time_s: 0.0,
            artifacts: Vec::new(),
            verdict: None,
        }
    }

    fn row(verdict: Option<Verdict>) -> SummaryRow {
        SummaryRow {
            stage_index: 0,
            stage: "x".into(),
            label: "l".into(),
            estimate: 0.0,
            std_error: 0.0,
            threshold: None,
            slack: None,
            verdict,
            artifact: "a".into(),
        }
    }

    #[test]
    fn exit_status_follows_verdicts_and_errors() {
        let ok = [record(StageStatus::Ok)];
        let rows = [
            row(None),
            row(Some(Verdict::Pass)),
            row(Some(Verdict::Inconclusive)),
        ];
        assert_eq!(exit_status(&ok, &rows, false), 0);
        assert_eq!(exit_status(&ok, &rows, true), 1);
        assert_eq!(exit_status(&ok, &[row(Some(Verdict::Fail))], false), 1);
        assert_eq!(exit_status(&[record(StageStatus::Error)], &[], false), 1);
        assert_eq!(exit_status(&[record(StageStatus::NotRun)], &[], false), 0);
    }

    #[test]
    fn decision_times_cover_the_horizon_from_zero() {
        assert_eq!(decision_times(1.0f64, 4), vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn check_bands_match_verdict_rule() {
        assert_eq!(
            Check::banded("c", 0.0, 0.1, 0.02, -0.1).verdict,
            Some(Verdict::Inconclusive)
        );
        assert_eq!(
            Check::banded("c", 0.0, 0.0, 0.0, 0.0).verdict,
            Some(Verdict::Pass)
        );
        assert_eq!(Check::info("i", 1.0).verdict, None);
        assert_eq!(
            probe_label(&Probe {
                t: 0.5,
                x: vec![-0.5, 1.0]
            }),
            "(t=0.5, x=[-0.5, 1])"
        );
    }
}
