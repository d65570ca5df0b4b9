//! Monte-Carlo game values over finite strategy families.
//!
//! Every estimate uses common random numbers: path `i` is driven by the same
//! Brownian increments for every strategy pair, so all cells of an estimate
//! matrix are functions of one shared noise sample and minimax inequalities
//! between them hold exactly.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    hamiltonian, minimax, ControlSet, GameProblem, HamiltonianQuery, Player, Side,
};
use crate::error::{GameError, Result};
use crate::pathspace::{ActionSelector, ElementaryStrategy, Field, Segment, StoppingRule};
use crate::scalar::Scalar;
use crate::sde::{map_paths, SampleStats, SimulationConfig, StrategyPair, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Verdict for an inequality whose slack should be non-negative.
    ///
    /// Pass when `slack >= -threshold`; inconclusive when the shortfall
    /// beyond the threshold is within three standard errors; fail otherwise.
    pub fn from_slack(slack: f64, threshold: f64, std_error: f64) -> Verdict {
        if slack.is_nan() || std_error.is_nan() {
            Verdict::Fail
        } else if slack >= -threshold {
            Verdict::Pass
        } else if slack >= -(threshold + 3.0 * std_error) {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    }

    pub fn worst(self, other: Verdict) -> Verdict {
        self.max(other)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    ValueEstimate,
    Ordering,
    HalfDppSuper,
    HalfDppSub,
    Dpp,
    Saddle,
    Supermartingale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub slack: f64,
}

impl DetailRow {
    pub fn new(label: impl Into<String>, estimate: f64, std_error: f64, slack: f64) -> Self {
        Self {
            label: label.into(),
            estimate,
            std_error,
            slack,
        }
    }
}

/// Outcome of one statistical check.
///
/// `slack` is the amount by which the checked inequality holds (negative
/// when violated); `verdict` follows [`Verdict::from_slack`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub estimate: f64,
    pub std_error: f64,
    pub threshold: f64,
    pub slack: f64,
    pub verdict: Verdict,
    pub details: Vec<DetailRow>,
    pub seeds: Vec<u64>,
    pub families: Vec<String>,
    pub notes: Vec<String>,
}

impl CertificateReport {
    pub fn new(
        kind: CertificateKind,
        estimate: f64,
        std_error: f64,
        threshold: f64,
        slack: f64,
    ) -> Self {
        Self {
            kind,
            estimate,
            std_error,
            threshold,
            slack,
            verdict: Verdict::from_slack(slack, threshold, std_error),
            details: Vec::new(),
            seeds: Vec::new(),
            families: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| GameError::Serialization(e.to_string()))
    }
}

/// How the members of a family were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilySpec {
    Constants { n: usize },
    RandomElementary { count: usize, seed: u64 },
    PdeFeedback { side: Side, decisions: usize },
    User { label: String },
    Union { parts: Vec<FamilySpec> },
}

impl FamilySpec {
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Constants { n } => format!("constants({n})"),
            FamilySpec::RandomElementary { count, seed } => format!("random({count}, seed={seed})"),
            FamilySpec::PdeFeedback { side, decisions } => {
                format!("pde_feedback({side}, {decisions} decisions)")
            }
            FamilySpec::User { label } => format!("user({label})"),
            FamilySpec::Union { parts } => parts
                .iter()
                .map(|p| p.label())
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }
}

/// Parameters of randomly drawn elementary strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFamilySpec {
    pub count: usize,
    pub seed: u64,
    /// Per-axis range for thresholds and exit-ball centers.
    pub state_box: Vec<(f64, f64)>,
    pub horizon: f64,
    /// At most this many decision times or exit switches per member.
    pub max_switches: usize,
}

/// A finite, non-empty set of strategies of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyFamily<S: Scalar> {
    player: Player,
    controls: Arc<ControlSet<S>>,
    members: Vec<ElementaryStrategy<S>>,
    spec: FamilySpec,
}

impl<S: Scalar> StrategyFamily<S> {
    pub fn new(
        player: Player,
        controls: Arc<ControlSet<S>>,
        members: Vec<ElementaryStrategy<S>>,
        spec: FamilySpec,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(GameError::InvalidArgument(
                "strategy family is empty".into(),
            ));
        }
        for (k, m) in members.iter().enumerate() {
            if m.player() != player || **m.controls() != *controls {
                return Err(GameError::StrategyMismatch(format!(
                    "family member {k} belongs to another player or control set"
                )));
            }
        }
        Ok(Self {
            player,
            controls,
            members,
            spec,
        })
    }

    /// One constant strategy per control point.
    pub fn constants(player: Player, controls: Arc<ControlSet<S>>) -> Result<Self> {
        let members = (0..controls.len())
            .map(|i| ElementaryStrategy::constant(player, controls.clone(), i))
            .collect::<Result<Vec<_>>>()?;
        let n = controls.len();
        Self::new(player, controls, members, FamilySpec::Constants { n })
    }

    pub fn singleton(strategy: ElementaryStrategy<S>, spec: FamilySpec) -> Result<Self> {
        let player = strategy.player();
        let controls = strategy.controls().clone();
        Self::new(player, controls, vec![strategy], spec)
    }

    /// Random constant, threshold and exit-switching strategies drawn from
    /// `spec.seed`.
    pub fn random(
        player: Player,
        controls: Arc<ControlSet<S>>,
        spec: &RandomFamilySpec,
    ) -> Result<Self> {
        if spec.state_box.is_empty() || spec.count == 0 || !(spec.horizon > 0.0) {
            return Err(GameError::InvalidArgument(
                "random family needs a state box, a positive count and a positive horizon".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = controls.len();
        let d = spec.state_box.len();
        let max_sw = spec.max_switches.max(1);
        let mut members = Vec::with_capacity(spec.count);
        for _ in 0..spec.count {
            let kind = rng.random_range(0..3u32);
            let member = match kind {
                0 => {
                    ElementaryStrategy::constant(player, controls.clone(), rng.random_range(0..n))?
                }
                1 => {
                    let m = rng.random_range(1..=max_sw);
                    let mut times: Vec<f64> =
                        (0..m).map(|_| rng.random::<f64>() * spec.horizon).collect();
                    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                    let mut segments = Vec::with_capacity(m + 1);
                    let untils = times
                        .iter()
                        .map(|&t| StoppingRule::constant(S::c(t)))
                        .chain(std::iter::once(StoppingRule::Terminal));
                    for until in untils {
                        let axis = rng.random_range(0..d);
                        let (lo, hi) = spec.state_box[axis];
                        let selector = ActionSelector::Threshold {
                            axis,
                            threshold: S::c(lo + (hi - lo) * rng.random::<f64>()),
                            below: rng.random_range(0..n),
                            above: rng.random_range(0..n),
                        };
                        segments.push(Segment::new(until, selector));
                    }
                    ElementaryStrategy::new(
                        player,
                        controls.clone(),
                        StoppingRule::constant(S::zero()),
                        segments,
                    )?
                }
                _ => {
                    let m = rng.random_range(1..=max_sw);
                    let mut segments = Vec::with_capacity(m + 1);
                    let mut prev = StoppingRule::constant(S::zero());
                    for k in 0..=m {
                        let selector = ActionSelector::constant(rng.random_range(0..n));
                        if k == m {
                            segments.push(Segment::new(StoppingRule::Terminal, selector));
                            break;
                        }
                        let center: Vec<S> = spec
                            .state_box
                            .iter()
                            .map(|&(lo, hi)| S::c(lo + (hi - lo) * rng.random::<f64>()))
                            .collect();
                        let width = spec
                            .state_box
                            .iter()
                            .map(|&(lo, hi)| hi - lo)
                            .fold(f64::INFINITY, f64::min);
                        let radius = S::c(width * (0.05 + 0.3 * rng.random::<f64>()));
                        let rule = StoppingRule::first_exit(center, radius, prev.clone())?;
                        prev = rule.clone();
                        segments.push(Segment::new(rule, selector));
                    }
                    ElementaryStrategy::new(
                        player,
                        controls.clone(),
                        StoppingRule::constant(S::zero()),
                        segments,
                    )?
                }
            };
            members.push(member);
        }
        Self::new(
            player,
            controls,
            members,
            FamilySpec::RandomElementary {
                count: spec.count,
                seed: spec.seed,
            },
        )
    }

    /// This family followed by the members of `other`.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut members = self.members.clone();
        members.extend(other.members.iter().cloned());
        Self::new(
            self.player,
            self.controls.clone(),
            members,
            FamilySpec::Union {
                parts: vec![self.spec.clone(), other.spec.clone()],
            },
        )
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn controls(&self) -> &Arc<ControlSet<S>> {
        &self.controls
    }

    pub fn members(&self) -> &[ElementaryStrategy<S>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn spec_label(&self) -> String {
        format!("{:?}: {}", self.player, self.spec.label())
    }
}

/// A real functional of a simulated trajectory whose mean is estimated.
pub trait PathFunctional<S: Scalar>: Sync {
    fn eval(&self, problem: &GameProblem<S>, tr: &Trajectory<S>) -> Result<f64>;
}

/// `g(X_T)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Payoff;

impl<S: Scalar> PathFunctional<S> for Payoff {
    fn eval(&self, problem: &GameProblem<S>, tr: &Trajectory<S>) -> Result<f64> {
        Ok(problem.payoff(tr.path.terminal_state()).f64())
    }
}

/// `w(rho(X), X_rho)` for a field `w` and stopping rule `rho`.
#[derive(Debug, Clone)]
pub struct StoppedValue<S: Scalar> {
    pub field: Field<S>,
    pub rule: StoppingRule<S>,
}

impl<S: Scalar> StoppedValue<S> {
    pub fn new(field: Field<S>, rule: StoppingRule<S>) -> Self {
        Self { field, rule }
    }
}

impl<S: Scalar> PathFunctional<S> for StoppedValue<S> {
    fn eval(&self, _problem: &GameProblem<S>, tr: &Trajectory<S>) -> Result<f64> {
        let i = self.rule.index_on_path(&tr.path)?;
        Ok(self.field.value(tr.path.time(i), tr.path.state(i)).f64())
    }
}

/// Per-path values of one strategy pair.
pub fn sample_pair<S: Scalar>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    functional: &dyn PathFunctional<S>,
) -> Result<Vec<f64>> {
    map_paths(problem, pair, s, x, cfg, |tr| functional.eval(problem, tr))?
        .into_iter()
        .collect()
}

/// Mean and standard error of `g(X_T)` under `(u, v)`.
pub fn estimate_value<S: Scalar>(
    problem: &GameProblem<S>,
    u: &ElementaryStrategy<S>,
    v: &ElementaryStrategy<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
) -> Result<(f64, f64)> {
    let pair = StrategyPair::new(u.clone(), v.clone())?;
    let st = SampleStats::from_values(&sample_pair(problem, &pair, s, x, cfg, &Payoff)?);
    Ok((st.mean, st.std_error))
}

/// Means and per-path samples for every (u member, v member) pair, stored
/// row-major with the u index slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMatrix {
    pub n_u: usize,
    pub n_v: usize,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    #[serde(skip)]
    samples: Vec<Vec<f64>>,
}

impl EstimateMatrix {
    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.means[i * self.n_v + j]
    }

    pub fn std_error(&self, i: usize, j: usize) -> f64 {
        self.std_errors[i * self.n_v + j]
    }

    pub fn samples(&self, i: usize, j: usize) -> &[f64] {
        &self.samples[i * self.n_v + j]
    }

    /// `inf_v sup_u` (upper) or `sup_u inf_v` (lower) of the means, with the
    /// standard error of the selected cell and its indices.
    pub fn side_value(&self, side: Side) -> (f64, f64, usize, usize) {
        let m = minimax(&self.means, self.n_u, self.n_v, side);
        (
            m.value,
            self.std_error(m.u_index, m.v_index),
            m.u_index,
            m.v_index,
        )
    }

    /// CSV with columns `u_index, v_index, mean, std_error`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "u_index,v_index,mean,std_error")?;
        for i in 0..self.n_u {
            for j in 0..self.n_v {
                writeln!(
                    w,
                    "{i},{j},{},{}",
                    crate::sde::fmt_num(self.mean(i, j)),
                    crate::sde::fmt_num(self.std_error(i, j))
                )?;
            }
        }
        Ok(())
    }
}

/// Estimate matrix of `functional` over `fam_u x fam_v` with common random
/// numbers.
pub fn estimate_matrix<S: Scalar>(
    problem: &GameProblem<S>,
    fam_u: &StrategyFamily<S>,
    fam_v: &StrategyFamily<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    functional: &dyn PathFunctional<S>,
) -> Result<EstimateMatrix> {
    if fam_u.player() != Player::One || fam_v.player() != Player::Two {
        return Err(GameError::StrategyMismatch(
            "families must be (player one, player two)".into(),
        ));
    }
    let (nu, nv) = (fam_u.len(), fam_v.len());
    let samples: Vec<Vec<f64>> = (0..nu * nv)
        .into_par_iter()
        .map(|c| {
            let pair =
                StrategyPair::new(fam_u.members[c / nv].clone(), fam_v.members[c % nv].clone())?;
            sample_pair(problem, &pair, s, x, cfg, functional)
        })
        .collect::<Result<_>>()?;
    let stats: Vec<SampleStats> = samples
        .iter()
        .map(|v| SampleStats::from_values(v))
        .collect();
    Ok(EstimateMatrix {
        n_u: nu,
        n_v: nv,
        means: stats.iter().map(|s| s.mean).collect(),
        std_errors: stats.iter().map(|s| s.std_error).collect(),
        samples,
    })
}

/// Upper and lower value estimates over two families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperLowerValues {
    pub v_plus: f64,
    pub v_plus_se: f64,
    /// `(u member, v member)` selecting `v_plus`.
    pub v_plus_pair: (usize, usize),
    pub v_minus: f64,
    pub v_minus_se: f64,
    pub v_minus_pair: (usize, usize),
    /// Best u member against each v member (argmax of each column).
    pub best_u_for_v: Vec<usize>,
    /// Best v member against each u member (argmin of each row).
    pub best_v_for_u: Vec<usize>,
    pub matrix: EstimateMatrix,
}

fn argbest(values: impl Iterator<Item = f64>, maximize: bool) -> (usize, f64) {
    let mut best = (
        0usize,
        if maximize {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        },
    );
    for (k, v) in values.enumerate() {
        let better = if maximize { v > best.1 } else { v < best.1 };
        if k == 0 || better {
            best = (k, v);
        }
    }
    best
}

pub fn upper_lower_from_matrix(matrix: EstimateMatrix) -> UpperLowerValues {
    let (vp, vpse, vpu, vpv) = matrix.side_value(Side::Upper);
    let (vm, vmse, vmu, vmv) = matrix.side_value(Side::Lower);
    let best_u_for_v = (0..matrix.n_v)
        .map(|j| argbest((0..matrix.n_u).map(|i| matrix.mean(i, j)), true).0)
        .collect();
    let best_v_for_u = (0..matrix.n_u)
        .map(|i| argbest((0..matrix.n_v).map(|j| matrix.mean(i, j)), false).0)
        .collect();
    UpperLowerValues {
        v_plus: vp,
        v_plus_se: vpse,
        v_plus_pair: (vpu, vpv),
        v_minus: vm,
        v_minus_se: vmse,
        v_minus_pair: (vmu, vmv),
        best_u_for_v,
        best_v_for_u,
        matrix,
    }
}

/// `V+ = inf_v sup_u E[g]` and `V- = sup_u inf_v E[g]` over the families.
pub fn upper_lower_values<S: Scalar>(
    problem: &GameProblem<S>,
    fam_u: &StrategyFamily<S>,
    fam_v: &StrategyFamily<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
) -> Result<UpperLowerValues> {
    Ok(upper_lower_from_matrix(estimate_matrix(
        problem, fam_u, fam_v, s, x, cfg, &Payoff,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub index: usize,
    pub value: f64,
    pub std_error: f64,
    /// `(mean, std_error)` of every member against the fixed strategy.
    pub table: Vec<(f64, f64)>,
}

/// Best member of `family` against `fixed`; ties go to the lowest index.
#[allow(clippy::too_many_arguments)]
pub fn best_response<S: Scalar>(
    problem: &GameProblem<S>,
    fixed: &ElementaryStrategy<S>,
    family: &StrategyFamily<S>,
    sense: Sense,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
) -> Result<BestResponse> {
    if fixed.player() == family.player() {
        return Err(GameError::StrategyMismatch(
            "best response needs the opponent's family".into(),
        ));
    }
    let table: Vec<(f64, f64)> = family
        .members()
        .par_iter()
        .map(|m| match fixed.player() {
            Player::One => estimate_value(problem, fixed, m, s, x, cfg),
            Player::Two => estimate_value(problem, m, fixed, s, x, cfg),
        })
        .collect::<Result<_>>()?;
    let (index, value) = argbest(table.iter().map(|c| c.0), sense == Sense::Maximize);
    Ok(BestResponse {
        index,
        value,
        std_error: table[index].1,
        table,
    })
}

/// Largest `H+ - H-` over `n` random queries around `(s, x)`.
pub fn isaacs_gap<S: Scalar>(
    problem: &GameProblem<S>,
    s: S,
    x: &[S],
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim_state();
    let horizon = problem.horizon().f64();
    let mut worst = 0.0f64;
    for _ in 0..n {
        let t = s.f64() + (horizon - s.f64()) * rng.random::<f64>();
        let xs: Vec<S> = x
            .iter()
            .map(|&c| S::c(c.f64() + 2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let p: Vec<S> = (0..d)
            .map(|_| S::c(6.0 * rng.random::<f64>() - 3.0))
            .collect();
        let m: Vec<S> = (0..d * d)
            .map(|_| S::c(2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let q = HamiltonianQuery::new(S::c(t), xs, p, m)?;
        let up = hamiltonian(problem, Side::Upper, &q)?.value.f64();
        let lo = hamiltonian(problem, Side::Lower, &q)?.value.f64();
        worst = worst.max((up - lo) / (1.0 + up.abs().max(lo.abs())));
    }
    Ok(worst)
}

/// Checks that no member of `dev_u` raises, and no member of `dev_v` lowers,
/// the value of `pair` by more than `epsilon` (paired standard errors).
#[allow(clippy::too_many_arguments)]
pub fn check_saddle<S: Scalar>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    dev_u: &StrategyFamily<S>,
    dev_v: &StrategyFamily<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    epsilon: f64,
) -> Result<CertificateReport> {
    if !(epsilon > 0.0) {
        return Err(GameError::InvalidArgument(
            "epsilon must be positive".into(),
        ));
    }
    let gap = isaacs_gap(problem, s, x, 64, cfg.rng_seed ^ 0x5AD1)?;
    if gap > 1e-9 {
        return Err(GameError::Precondition(format!(
            "Isaacs condition fails on sampled queries (relative gap {gap:e}); \
             the game may have no value, use upper_lower_values instead"
        )));
    }
    let base = sample_pair(problem, pair, s, x, cfg, &Payoff)?;
    let bst = SampleStats::from_values(&base);
    let mut rows = Vec::new();
    let mut verdict = Verdict::Pass;
    let mut slack_min = f64::INFINITY;
    let dev = |u: &ElementaryStrategy<S>, v: &ElementaryStrategy<S>| -> Result<Vec<f64>> {
        sample_pair(
            problem,
            &StrategyPair::new(u.clone(), v.clone())?,
            s,
            x,
            cfg,
            &Payoff,
        )
    };
    let u_samples: Vec<Vec<f64>> = dev_u
        .members()
        .par_iter()
        .map(|u| dev(u, &pair.v))
        .collect::<Result<_>>()?;
    let v_samples: Vec<Vec<f64>> = dev_v
        .members()
        .par_iter()
        .map(|v| dev(&pair.u, v))
        .collect::<Result<_>>()?;
    for (label, samples, sign) in u_samples
        .iter()
        .enumerate()
        .map(|(k, v)| (format!("u deviation #{k}"), v, 1.0))
        .chain(
            v_samples
                .iter()
                .enumerate()
                .map(|(k, v)| (format!("v deviation #{k}"), v, -1.0)),
        )
    {
        let gain: Vec<f64> = samples
            .iter()
            .zip(&base)
            .map(|(a, b)| sign * (a - b))
            .collect();
        let st = SampleStats::from_values(&gain);
        let slack = -st.mean;
        verdict = verdict.worst(Verdict::from_slack(slack, epsilon, st.std_error));
        slack_min = slack_min.min(slack);
        rows.push(DetailRow::new(
            label,
            SampleStats::from_values(samples).mean,
            st.std_error,
            slack,
        ));
    }
    let mut report = CertificateReport::new(
        CertificateKind::Saddle,
        bst.mean,
        bst.std_error,
        epsilon,
        slack_min,
    );
    report.verdict = verdict;
    report.details = rows;
    report.seeds.push(cfg.rng_seed);
    report.families = vec![dev_u.spec_label(), dev_v.spec_label()];
    report
        .notes
        .push("slack of each row is minus the deviator's paired mean gain".into());
    Ok(report)
}

/// The four classes of stochastic semi-solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiClass {
    SuperUpper,
    SubUpper,
    SuperLower,
    SubLower,
}

impl SemiClass {
    pub fn is_super(self) -> bool {
        matches!(self, SemiClass::SuperUpper | SemiClass::SuperLower)
    }

    pub fn side(self) -> Side {
        match self {
            SemiClass::SuperUpper | SemiClass::SubUpper => Side::Upper,
            SemiClass::SuperLower | SemiClass::SubLower => Side::Lower,
        }
    }

    /// The player whose witness strategy the class definition provides.
    pub fn witness_player(self) -> Player {
        match self {
            SemiClass::SuperUpper | SemiClass::SuperLower => Player::Two,
            SemiClass::SubUpper | SemiClass::SubLower => Player::One,
        }
    }
}

impl std::fmt::Display for SemiClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SemiClass::SuperUpper => "super_upper",
            SemiClass::SubUpper => "sub_upper",
            SemiClass::SuperLower => "super_lower",
            SemiClass::SubLower => "sub_lower",
        })
    }
}

/// Half dynamic programming inequality for `w` at `(s, x)`:
/// super classes check `w(s,x) >= opt E[w(rho, X_rho)]`, sub classes the
/// reverse, with `opt = inf_v sup_u` on the upper side and `sup_u inf_v`
/// on the lower.
#[allow(clippy::too_many_arguments)]
pub fn check_half_dpp<S: Scalar>(
    problem: &GameProblem<S>,
    w: &Field<S>,
    class: SemiClass,
    rho: &StoppingRule<S>,
    fam_u: &StrategyFamily<S>,
    fam_v: &StrategyFamily<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    threshold: f64,
) -> Result<CertificateReport> {
    let functional = StoppedValue::new(w.clone(), rho.clone());
    let m = estimate_matrix(problem, fam_u, fam_v, s, x, cfg, &functional)?;
    let (est, se, ui, vi) = m.side_value(class.side());
    let ws = w.value(s, x).f64();
    let slack = if class.is_super() { ws - est } else { est - ws };
    let kind = if class.is_super() {
        CertificateKind::HalfDppSuper
    } else {
        CertificateKind::HalfDppSub
    };
    let mut report = CertificateReport::new(kind, est, se, threshold, slack);
    report
        .details
        .push(DetailRow::new("w(s,x)", ws, 0.0, slack));
    report.details.push(DetailRow::new(
        format!("selected (u#{ui}, v#{vi})"),
        est,
        se,
        slack,
    ));
    report.seeds.push(cfg.rng_seed);
    report.families = vec![fam_u.spec_label(), fam_v.spec_label()];
    report
        .notes
        .push(format!("class: {class}; rule: {}", rho.label()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FnCoefficients;

    fn product_game() -> GameProblem<f64> {
        let c = FnCoefficients::new(
            |_t, _x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] * v[0],
            |_t, _x: &[f64], _u: &[f64], _v: &[f64], out: &mut [f64]| out[0] = 0.0,
            |x: &[f64]| x[0].tanh(),
        );
        let set = ControlSet::new("pm", vec![vec![-1.0], vec![1.0]]).unwrap();
        GameProblem::new("uv", 1, 1, Arc::new(c), set.clone(), set, 1.0, (-1.0, 1.0)).unwrap()
    }

    #[test]
    fn verdict_bands() {
        assert_eq!(Verdict::from_slack(0.0, 0.0, 0.0), Verdict::Pass);
        assert_eq!(Verdict::from_slack(-0.1, 0.1, 0.0), Verdict::Pass);
        assert_eq!(Verdict::from_slack(-0.2, 0.1, 0.05), Verdict::Inconclusive);
        assert_eq!(Verdict::from_slack(-0.3, 0.1, 0.05), Verdict::Fail);
        assert_eq!(Verdict::from_slack(f64::NAN, 0.1, 0.05), Verdict::Fail);
    }

    #[test]
    fn non_isaacs_matrix_values() {
        let p = product_game();
        let fu = StrategyFamily::constants(Player::One, p.u_set().clone()).unwrap();
        let fv = StrategyFamily::constants(Player::Two, p.v_set().clone()).unwrap();
        let cfg = SimulationConfig::new(20, 3, 4);
        let r = upper_lower_values(&p, &fu, &fv, 0.0, &[0.0], &cfg).unwrap();
        assert!((r.v_plus - 1f64.tanh()).abs() < 1e-12);
        assert!((r.v_minus + 1f64.tanh()).abs() < 1e-12);
        assert_eq!(r.v_plus_se, 0.0);

        let fixed = ElementaryStrategy::constant(Player::One, p.u_set().clone(), 1).unwrap();
        let br = best_response(&p, &fixed, &fv, Sense::Minimize, 0.0, &[0.0], &cfg).unwrap();
        assert_eq!(br.index, 0);
        assert!((br.value + 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn saddle_refuses_non_isaacs() {
        let p = product_game();
        let fu = StrategyFamily::constants(Player::One, p.u_set().clone()).unwrap();
        let fv = StrategyFamily::constants(Player::Two, p.v_set().clone()).unwrap();
        let pair = StrategyPair::new(fu.members()[0].clone(), fv.members()[0].clone()).unwrap();
        let r = check_saddle(
            &p,
            &pair,
            &fu,
            &fv,
            0.0,
            &[0.0],
            &SimulationConfig::new(10, 1, 2),
            0.1,
        );
        assert!(matches!(r, Err(GameError::Precondition(_))));
    }

    #[test]
    fn random_families_are_reproducible() {
        let set = Arc::new(ControlSet::linspace("U", -1.0, 1.0, 5).unwrap());
        let spec = RandomFamilySpec {
            count: 30,
            seed: 9,
            state_box: vec![(-1.0, 1.0)],
            horizon: 1.0,
            max_switches: 3,
        };
        let a = StrategyFamily::<f64>::random(Player::One, set.clone(), &spec).unwrap();
        let b = StrategyFamily::<f64>::random(Player::One, set, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
    }
}
