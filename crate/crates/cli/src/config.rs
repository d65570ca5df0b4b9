//! Experiment configuration: one JSON document describing the problem, the
//! grid, the Monte Carlo settings, the probe points and the stage pipeline.
//!
//! Parsing reports the JSON path of the offending field; [`ExperimentConfig::validate`]
//! collects every semantic error with its path.

use serde::{Deserialize, Serialize};
use stochgame::presets::{self, InlineProblem, Polynomial};
use stochgame::{
    Axis, Boundary, BumpSpec, GameProblem, Scalar, SemiClass, Side, SimulationConfig,
    SpaceTimeGrid, StoppingRule,
};

use crate::error::{CliError, ConfigIssue};

/// Floating-point type every numerical stage runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// A shipped preset by name, or an inline affine-in-control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Preset(String),
    Inline(Box<InlineProblem>),
}

impl ProblemSource {
    pub fn build<S: Scalar>(&self) -> stochgame::Result<GameProblem<S>> {
        match self {
            ProblemSource::Preset(name) => presets::preset(name),
            ProblemSource::Inline(spec) => spec.build(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

fn default_cfl_safety() -> f64 {
    0.9
}

fn default_csv_levels() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
    /// Number of time steps; chosen from the CFL bound when absent.
    #[serde(default)]
    pub n_t: Option<usize>,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default)]
    pub boundary: Boundary,
    /// At most this many evenly strided time levels go into each grid CSV.
    #[serde(default = "default_csv_levels")]
    pub csv_levels: usize,
}

impl GridConfig {
    pub fn axes_with_nodes<S: Scalar>(&self, nodes: Option<usize>) -> Vec<Axis<S>> {
        self.axes
            .iter()
            .map(|a| Axis::new(S::c(a.lo), S::c(a.hi), nodes.unwrap_or(a.nodes)))
            .collect()
    }

    pub fn build<S: Scalar>(
        &self,
        problem: &GameProblem<S>,
        nodes: Option<usize>,
    ) -> stochgame::Result<SpaceTimeGrid<S>> {
        let axes = self.axes_with_nodes(nodes);
        match self.n_t {
            Some(n_t) => SpaceTimeGrid::for_problem(problem, axes, n_t),
            None => SpaceTimeGrid::auto_for_problem(problem, axes, S::c(self.cfl_safety)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub seed: u64,
    /// Paths per estimate.
    pub batch: usize,
    /// Euler steps over the full horizon.
    pub steps: usize,
}

impl McConfig {
    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig::new(self.steps, self.seed, self.batch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_max_switches() -> usize {
    4
}

fn default_decisions() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMembers {
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_max_switches")]
    pub max_switches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeFeedbackMember {
    pub side: Side,
    #[serde(default = "default_decisions")]
    pub decisions: usize,
}

/// Members of one player's strategy family: every constant control, random
/// elementary strategies and feedback read from solved grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "default_true")]
    pub constants: bool,
    #[serde(default)]
    pub random: Option<RandomMembers>,
    #[serde(default)]
    pub pde_feedback: Vec<PdeFeedbackMember>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            constants: true,
            random: None,
            pde_feedback: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamiliesConfig {
    #[serde(default)]
    pub u: FamilyConfig,
    #[serde(default)]
    pub v: FamilyConfig,
}

fn default_tolerance() -> f64 {
    3e-2
}

fn default_grid_tolerance() -> f64 {
    2e-2
}

fn default_radius() -> f64 {
    0.5
}

fn default_deviations() -> usize {
    50
}

fn default_bins() -> usize {
    16
}

fn default_occupancy() -> usize {
    50
}

fn default_super_upper() -> SemiClass {
    SemiClass::SuperUpper
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct RulePair<S: Scalar> {
    pub tau: StoppingRule<S>,
    pub rho: StoppingRule<S>,
}

/// How a certification candidate is built. Later candidates may refer to
/// earlier ones by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "",
    tag = "kind",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum CandidateConfig<S: Scalar> {
    /// `w = value`, defaulting to `sup g` for super classes and `inf g` for
    /// sub classes.
    Constant {
        name: String,
        class: SemiClass,
        #[serde(default)]
        value: Option<f64>,
        #[serde(default)]
        witness_index: usize,
    },
    /// `w(t, x)` given by a polynomial of degree at most three, sampled on
    /// the configured grid, with a constant witness.
    Polynomial {
        name: String,
        class: SemiClass,
        w: Polynomial,
        #[serde(default)]
        witness_index: usize,
    },
    /// The solved grid of the class's side with its feedback witness.
    Solved {
        name: String,
        #[serde(default = "default_super_upper")]
        class: SemiClass,
        #[serde(default)]
        boundary: Option<Boundary>,
        #[serde(default = "default_decisions")]
        decisions: usize,
    },
    Lattice {
        name: String,
        of: [String; 2],
    },
    BumpSuper {
        name: String,
        base: String,
        bump: BumpSpec<S>,
    },
    BumpSub {
        name: String,
        base: String,
        bump: BumpSpec<S>,
        map: Vec<usize>,
    },
}

impl<S: Scalar> CandidateConfig<S> {
    pub fn name(&self) -> &str {
        match self {
            CandidateConfig::Constant { name, .. }
            | CandidateConfig::Polynomial { name, .. }
            | CandidateConfig::Solved { name, .. }
            | CandidateConfig::Lattice { name, .. }
            | CandidateConfig::BumpSuper { name, .. }
            | CandidateConfig::BumpSub { name, .. } => name,
        }
    }

    fn references(&self) -> Vec<&str> {
        match self {
            CandidateConfig::Lattice { of, .. } => of.iter().map(String::as_str).collect(),
            CandidateConfig::BumpSuper { base, .. } | CandidateConfig::BumpSub { base, .. } => {
                vec![base]
            }
            _ => Vec::new(),
        }
    }
}

/// One pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "",
    tag = "stage",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum StageConfig<S: Scalar> {
    SolveUpper,
    SolveLower,
    /// Upper and lower value estimates over the configured families at every
    /// probe, checked against the payoff bounds and any solved grids.
    Values {
        #[serde(default = "default_grid_tolerance")]
        grid_tolerance: f64,
    },
    /// Dynamic programming residual of a solved grid with the rule "first
    /// exit from the ball of `radius` around the probe, capped at `cap`".
    Dpp {
        #[serde(default)]
        side: Side,
        #[serde(default = "default_radius")]
        radius: f64,
        /// Absolute cap time; half the horizon when absent.
        #[serde(default)]
        cap: Option<f64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    /// Feedback pair of the solved upper grid against random deviations.
    Saddle {
        #[serde(default = "default_decisions")]
        decisions: usize,
        #[serde(default = "default_deviations")]
        deviations: usize,
        #[serde(default = "default_max_switches")]
        max_switches: usize,
        /// Seed of the deviation families; the Monte Carlo seed when absent.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_tolerance")]
        epsilon: f64,
    },
    Certify {
        candidates: Vec<CandidateConfig<S>>,
        pairs: Vec<RulePair<S>>,
        /// Start points; the probes when absent.
        #[serde(default)]
        starts: Option<Vec<Probe>>,
        #[serde(default = "default_grid_tolerance")]
        threshold: f64,
        #[serde(default)]
        opponents: FamilyConfig,
        #[serde(default)]
        prefixes: FamilyConfig,
        #[serde(default = "default_bins")]
        bins_per_dim: usize,
        #[serde(default = "default_occupancy")]
        min_occupancy: usize,
        /// Paths per (rule pair, opponent, prefix, start); the Monte Carlo
        /// batch when absent.
        #[serde(default)]
        batch: Option<usize>,
    },
    /// Solves at each node count and reports the probe values, compared with
    /// `reference` when given and with the next refinement otherwise.
    ConvergenceSweep {
        #[serde(default)]
        side: Side,
        nodes: Vec<usize>,
        #[serde(default)]
        reference: Option<Vec<f64>>,
    },
}

impl<S: Scalar> StageConfig<S> {
    pub fn name(&self) -> &'static str {
        match self {
            StageConfig::SolveUpper => "solve_upper",
            StageConfig::SolveLower => "solve_lower",
            StageConfig::Values { .. } => "values",
            StageConfig::Dpp { .. } => "dpp",
            StageConfig::Saddle { .. } => "saddle",
            StageConfig::Certify { .. } => "certify",
            StageConfig::ConvergenceSweep { .. } => "convergence_sweep",
        }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct ExperimentConfig<S: Scalar> {
    pub name: String,
    #[serde(default)]
    pub precision: Precision,
    pub problem: ProblemSource,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub families: FamiliesConfig,
    pub pipeline: Vec<StageConfig<S>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

/// Minimum distance of probes from the box faces, as a fraction of the
/// axis length.
pub const PROBE_MARGIN: f64 = 0.25;

/// Reads the `precision` field of a raw document.
pub fn precision_of(doc: &serde_json::Value) -> Result<Precision, CliError> {
    match doc.get("precision") {
        None => Ok(Precision::F64),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::Config(vec![ConfigIssue::new("precision", e.to_string())])),
    }
}

/// Parses a raw document, reporting the path of the first malformed field.
pub fn parse<S: Scalar>(doc: &serde_json::Value) -> Result<ExperimentConfig<S>, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(vec![ConfigIssue::new(path, e.into_inner().to_string())])
    })
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue::new(path, message));
    }
}

impl<S: Scalar> ExperimentConfig<S> {
    /// Every semantic problem of the configuration, each with its field path.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut out = Issues(Vec::new());
        if self.name.trim().is_empty() {
            out.push("name", "must not be empty");
        }
        let problem = match self.problem.build::<S>() {
            Ok(p) => Some(p),
            Err(e) => {
                let path = match &self.problem {
                    ProblemSource::Preset(_) => "problem.preset",
                    ProblemSource::Inline(_) => "problem.inline",
                };
                out.push(path, e.to_string());
                None
            }
        };
        self.validate_grid(problem.as_ref(), &mut out);
        if self.mc.batch == 0 {
            out.push("mc.batch", "must be at least 1");
        }
        if self.mc.steps == 0 {
            out.push("mc.steps", "must be at least 1");
        }
        if let Some(p) = &problem {
            self.validate_probes(p, &mut out);
        }
        self.validate_families(&mut out);
        self.validate_pipeline(problem.as_ref(), &mut out);
        if out.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(out.0))
        }
    }

    fn validate_grid(&self, problem: Option<&GameProblem<S>>, out: &mut Issues) {
        let g = &self.grid;
        if let Some(p) = problem {
            if g.axes.len() != p.dim_state() {
                out.push(
                    "grid.axes",
                    format!("expected {} axes, found {}", p.dim_state(), g.axes.len()),
                );
            }
        }
        for (i, a) in g.axes.iter().enumerate() {
            if !(a.lo < a.hi) {
                out.push(format!("grid.axes[{i}]"), "needs lo < hi");
            }
            if a.nodes < 3 {
                out.push(format!("grid.axes[{i}].nodes"), "needs at least 3 nodes");
            }
        }
        if !(g.cfl_safety > 0.0 && g.cfl_safety <= 1.0) {
            out.push("grid.cfl_safety", "must lie in (0, 1]");
        }
        if g.n_t == Some(0) {
            out.push("grid.n_t", "must be at least 1");
        }
        if g.csv_levels < 2 {
            out.push("grid.csv_levels", "must be at least 2");
        }
    }

    fn in_safe_interior(&self, x: &[f64]) -> bool {
        x.len() == self.grid.axes.len()
            && self.grid.axes.iter().zip(x).all(|(a, &c)| {
                let m = (a.hi - a.lo) * PROBE_MARGIN;
                c >= a.lo + m && c <= a.hi - m
            })
    }

    fn check_points(&self, path: &str, points: &[Probe], horizon: f64, out: &mut Issues) {
        for (k, p) in points.iter().enumerate() {
            if !(p.t >= 0.0 && p.t < horizon) {
                out.push(
                    format!("{path}[{k}].t"),
                    format!("must lie in [0, {horizon})"),
                );
            }
            if !self.in_safe_interior(&p.x) {
                out.push(
                    format!("{path}[{k}].x"),
                    format!("must have {} coordinates inside the grid's safe interior (margin {PROBE_MARGIN} of each axis)", self.grid.axes.len()),
                );
            }
        }
    }

    fn validate_probes(&self, problem: &GameProblem<S>, out: &mut Issues) {
        self.check_points("probes", &self.probes, problem.horizon().f64(), out);
        for (i, stage) in self.pipeline.iter().enumerate() {
            if let StageConfig::Certify {
                starts: Some(starts),
                ..
            } = stage
            {
                self.check_points(
                    &format!("pipeline[{i}].starts"),
                    starts,
                    problem.horizon().f64(),
                    out,
                );
            }
        }
    }

    fn validate_family(path: &str, f: &FamilyConfig, out: &mut Issues) {
        if !f.constants && f.random.is_none() && f.pde_feedback.is_empty() {
            out.push(path, "family has no members");
        }
        if let Some(r) = &f.random {
            if r.count == 0 {
                out.push(format!("{path}.random.count"), "must be at least 1");
            }
        }
        for (k, m) in f.pde_feedback.iter().enumerate() {
            if m.decisions == 0 {
                out.push(
                    format!("{path}.pde_feedback[{k}].decisions"),
                    "must be at least 1",
                );
            }
        }
    }

    fn validate_families(&self, out: &mut Issues) {
        Self::validate_family("families.u", &self.families.u, out);
        Self::validate_family("families.v", &self.families.v, out);
    }

    fn validate_pipeline(&self, problem: Option<&GameProblem<S>>, out: &mut Issues) {
        if self.pipeline.is_empty() {
            out.push("pipeline", "must list at least one stage");
        }
        let mut solved: Vec<Side> = Vec::new();
        let needs_side = |solved: &[Side], side: Side, path: String, out: &mut Issues| {
            if !solved.contains(&side) {
                out.push(path, format!("needs an earlier solve_{side} stage"));
            }
        };
        let families_need = |solved: &[Side], path: String, f: &FamilyConfig, out: &mut Issues| {
            for m in &f.pde_feedback {
                needs_side(solved, m.side, path.clone(), out);
            }
        };
        for (i, stage) in self.pipeline.iter().enumerate() {
            let path = format!("pipeline[{i}]");
            match stage {
                StageConfig::SolveUpper => solved.push(Side::Upper),
                StageConfig::SolveLower => solved.push(Side::Lower),
                StageConfig::Values { grid_tolerance } => {
                    if !(*grid_tolerance >= 0.0) {
                        out.push(format!("{path}.grid_tolerance"), "must be non-negative");
                    }
                    families_need(
                        &solved,
                        format!("{path} (families.u)"),
                        &self.families.u,
                        out,
                    );
                    families_need(
                        &solved,
                        format!("{path} (families.v)"),
                        &self.families.v,
                        out,
                    );
                }
                StageConfig::Dpp {
                    side,
                    radius,
                    cap,
                    tolerance,
                } => {
                    needs_side(&solved, *side, path.clone(), out);
                    families_need(
                        &solved,
                        format!("{path} (families.u)"),
                        &self.families.u,
                        out,
                    );
                    families_need(
                        &solved,
                        format!("{path} (families.v)"),
                        &self.families.v,
                        out,
                    );
                    if !(*radius > 0.0) {
                        out.push(format!("{path}.radius"), "must be positive");
                    }
                    if let (Some(c), Some(p)) = (cap, problem) {
                        if !(*c > 0.0 && *c <= p.horizon().f64()) {
                            out.push(format!("{path}.cap"), "must lie in (0, T]");
                        }
                    }
                    if !(*tolerance >= 0.0) {
                        out.push(format!("{path}.tolerance"), "must be non-negative");
                    }
                }
                StageConfig::Saddle {
                    decisions,
                    deviations,
                    epsilon,
                    ..
                } => {
                    needs_side(&solved, Side::Upper, path.clone(), out);
                    if *decisions == 0 {
                        out.push(format!("{path}.decisions"), "must be at least 1");
                    }
                    if *deviations == 0 {
                        out.push(format!("{path}.deviations"), "must be at least 1");
                    }
                    if !(*epsilon > 0.0) {
                        out.push(format!("{path}.epsilon"), "must be positive");
                    }
                }
                StageConfig::Certify {
                    candidates,
                    pairs,
                    threshold,
                    opponents,
                    prefixes,
                    bins_per_dim,
                    min_occupancy,
                    batch,
                    ..
                } => {
                    if *batch == Some(0) {
                        out.push(format!("{path}.batch"), "must be at least 1");
                    }
                    self.validate_candidates(&path, candidates, &solved, out);
                    if pairs.is_empty() {
                        out.push(
                            format!("{path}.pairs"),
                            "must list at least one (tau, rho) pair",
                        );
                    }
                    if !(*threshold >= 0.0) {
                        out.push(format!("{path}.threshold"), "must be non-negative");
                    }
                    Self::validate_family(&format!("{path}.opponents"), opponents, out);
                    Self::validate_family(&format!("{path}.prefixes"), prefixes, out);
                    families_need(&solved, format!("{path}.opponents"), opponents, out);
                    families_need(&solved, format!("{path}.prefixes"), prefixes, out);
                    if *bins_per_dim == 0 {
                        out.push(format!("{path}.bins_per_dim"), "must be at least 1");
                    }
                    if *min_occupancy == 0 {
                        out.push(format!("{path}.min_occupancy"), "must be at least 1");
                    }
                }
                StageConfig::ConvergenceSweep {
                    nodes, reference, ..
                } => {
                    if nodes.len() < 2 {
                        out.push(format!("{path}.nodes"), "needs at least two node counts");
                    }
                    if nodes.iter().any(|&n| n < 3) {
                        out.push(format!("{path}.nodes"), "node counts must be at least 3");
                    }
                    if let Some(r) = reference {
                        if r.len() != self.probes.len() {
                            out.push(format!("{path}.reference"), "needs one value per probe");
                        }
                    }
                }
            }
        }
    }

    fn validate_candidates(
        &self,
        path: &str,
        candidates: &[CandidateConfig<S>],
        solved: &[Side],
        out: &mut Issues,
    ) {
        if candidates.is_empty() {
            out.push(
                format!("{path}.candidates"),
                "must list at least one candidate",
            );
        }
        let mut seen: Vec<&str> = Vec::new();
        for (k, c) in candidates.iter().enumerate() {
            let cpath = format!("{path}.candidates[{k}]");
            if c.name().is_empty()
                || !c
                    .name()
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-')
            {
                out.push(
                    format!("{cpath}.name"),
                    "must be non-empty and use only [A-Za-z0-9_-]",
                );
            }
            if seen.contains(&c.name()) {
                out.push(
                    format!("{cpath}.name"),
                    format!("duplicate candidate `{}`", c.name()),
                );
            }
            for r in c.references() {
                if !seen.contains(&r) {
                    out.push(
                        cpath.clone(),
                        format!("refers to `{r}`, which is not an earlier candidate"),
                    );
                }
            }
            if let CandidateConfig::Polynomial { w, .. } = c {
                if let Err(e) = w.validate(self.grid.axes.len(), "w") {
                    out.push(format!("{cpath}.w"), e.to_string());
                }
            }
            if let CandidateConfig::Solved {
                class,
                decisions,
                boundary,
                ..
            } = c
            {
                if *decisions == 0 {
                    out.push(format!("{cpath}.decisions"), "must be at least 1");
                }
                if boundary.is_none() && !solved.contains(&class.side()) {
                    out.push(
                        cpath.clone(),
                        format!(
                            "needs an earlier solve_{} stage or an explicit boundary",
                            class.side()
                        ),
                    );
                }
            }
            seen.push(c.name());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> serde_json::Value {
        json!({
            "name": "t",
            "problem": { "preset": "hopf_lax_asym" },
            "grid": { "axes": [{ "lo": -3.0, "hi": 3.0, "nodes": 61 }] },
            "mc": { "seed": 1, "batch": 10, "steps": 10 },
            "probes": [{ "t": 0.0, "x": [1.0] }],
            "pipeline": [{ "stage": "solve_upper" }, { "stage": "values" }]
        })
    }

    fn issues(doc: &serde_json::Value) -> Vec<ConfigIssue> {
        match parse::<f64>(doc).and_then(|c| c.validate()) {
            Err(CliError::Config(v)) => v,
            other => panic!("expected configuration issues, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let c = parse::<f64>(&base()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.precision, Precision::F64);
        assert_eq!(c.grid.cfl_safety, 0.9);
        assert_eq!(c.grid.boundary, Boundary::ClampedTerminal);
        assert!(c.families.u.constants && c.families.v.pde_feedback.is_empty());
        assert_eq!(
            c.pipeline[1],
            StageConfig::Values {
                grid_tolerance: 2e-2
            }
        );
        assert_eq!(c.output_dir, "out");
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let mut doc = base();
        doc["grid"]["axes"][0]["nodes"] = json!("many");
        let v = issues(&doc);
        assert_eq!(v[0].path, "grid.axes[0].nodes");
        let mut doc = base();
        doc["mc"]["sede"] = json!(3);
        assert_eq!(issues(&doc)[0].path, "mc.sede");
    }

    #[test]
    fn probes_must_sit_in_the_safe_interior() {
        let mut doc = base();
        doc["probes"] = json!([{ "t": 0.0, "x": [1.6] }, { "t": 1.0, "x": [0.0] }]);
        let paths: Vec<String> = issues(&doc).into_iter().map(|i| i.path).collect();
        assert_eq!(paths, vec!["probes[0].x", "probes[1].t"]);
        doc["probes"] = json!([{ "t": 0.0, "x": [1.5] }]);
        parse::<f64>(&doc).unwrap().validate().unwrap();
    }

    #[test]
    fn unknown_preset_is_reported() {
        let mut doc = base();
        doc["problem"] = json!({ "preset": "nope" });
        assert_eq!(issues(&doc)[0].path, "problem.preset");
    }

    #[test]
    fn stages_need_their_grids() {
        let mut doc = base();
        doc["pipeline"] =
            json!([{ "stage": "dpp" }, { "stage": "saddle" }, { "stage": "solve_lower" }]);
        doc["families"] = json!({ "v": { "pde_feedback": [{ "side": "lower" }] } });
        let paths: Vec<String> = issues(&doc).into_iter().map(|i| i.path).collect();
        assert!(paths.contains(&"pipeline[0]".to_string()));
        assert!(paths.contains(&"pipeline[1]".to_string()));
        assert!(paths
            .iter()
            .any(|p| p.starts_with("pipeline[0] (families.v)")));
    }

    #[test]
    fn candidates_refer_only_to_earlier_names() {
        let mut doc = base();
        doc["pipeline"] = json!([{
            "stage": "certify",
            "pairs": [{ "tau": { "type": "constant", "params": { "time": 0.0 } }, "rho": { "type": "terminal" } }],
            "candidates": [
                { "kind": "lattice", "name": "m", "of": ["a", "b"] },
                { "kind": "constant", "name": "a", "class": "super_upper" },
                { "kind": "constant", "name": "a", "class": "super_upper" },
                { "kind": "polynomial", "name": "p", "class": "super_upper", "w": [{ "coef": 1.0, "t_pow": 4 }] }
            ]
        }]);
        let v = issues(&doc);
        assert!(v
            .iter()
            .any(|i| i.path == "pipeline[0].candidates[0]" && i.message.contains("`a`")));
        assert!(v.iter().any(|i| i.path == "pipeline[0].candidates[2].name"));
        assert!(v.iter().any(|i| i.path == "pipeline[0].candidates[3].w"));
    }

    #[test]
    fn precision_is_read_before_typed_parsing() {
        let mut doc = base();
        assert_eq!(precision_of(&doc).unwrap(), Precision::F64);
        doc["precision"] = json!("f32");
        assert_eq!(precision_of(&doc).unwrap(), Precision::F32);
        parse::<f32>(&doc).unwrap().validate().unwrap();
        doc["precision"] = json!("f16");
        assert!(precision_of(&doc).is_err());
    }
}
