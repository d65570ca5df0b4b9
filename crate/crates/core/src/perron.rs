//! Stochastic semi-solutions: candidates with witness strategies, sampled
//! certification of their defining conditional inequality, the lattice
//! operation and the local bump constructions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{minimax, ControlSet, GameProblem, HamiltonianQuery, Player, Side};
use crate::error::{GameError, Result};
use crate::field::{GridFunction, TestFunction};
use crate::game_mc::{
    CertificateKind, CertificateReport, DetailRow, SemiClass, StrategyFamily, Verdict,
};
use crate::isaacs::ValueGrid;
use crate::pathspace::{
    ActionSelector, Condition, ElementaryStrategy, FeedbackTable, Field, PathEvent, StoppingRule,
};
use crate::scalar::{dist, Scalar};
use crate::sde::{map_paths, SampleStats, SimulationConfig, StrategyPair};

/// Note attached to every certification report.
pub const SAMPLED_SPEC_NOTE: &str =
    "passing a finite sample of rules, opponents and start points does not prove class membership";

/// Declarative recipe turning a stopping rule (and, for classes whose
/// witness may depend on it, the opponent's strategy) into the witness
/// strategy started at that rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum WitnessProducer<S: Scalar> {
    /// Holds one control from the rule on.
    Constant { index: usize },
    /// Grid feedback from the rule on, re-deciding at the listed times.
    Feedback {
        table: Arc<FeedbackTable<S>>,
        decisions: Vec<S>,
    },
    /// `first`'s witness where `condition` holds at the rule, else `second`'s.
    Switch {
        condition: Condition<S>,
        first: Box<WitnessProducer<S>>,
        second: Box<WitnessProducer<S>>,
    },
    /// Holds `hat_index` where `condition` holds at the rule, until the
    /// path leaves the space-time ball of radius `half_radius` around
    /// `(t0, center)`; `base`'s witness from then on (and immediately where
    /// the condition fails).
    BumpSuper {
        condition: Condition<S>,
        hat_index: usize,
        t0: S,
        center: Vec<S>,
        half_radius: S,
        base: Box<WitnessProducer<S>>,
    },
    /// As [`WitnessProducer::BumpSuper`], with the constant replaced by
    /// `map` applied to the opponent's action.
    BumpSub {
        condition: Condition<S>,
        map: Vec<usize>,
        t0: S,
        center: Vec<S>,
        half_radius: S,
        base: Box<WitnessProducer<S>>,
    },
}

impl<S: Scalar> WitnessProducer<S> {
    /// Feedback witness read from the saddle indices of a solved grid.
    pub fn from_value_grid(vg: &ValueGrid<S>, player: Player, decisions: Vec<S>) -> Result<Self> {
        Ok(WitnessProducer::Feedback {
            table: Arc::new(vg.feedback_table(player)?),
            decisions,
        })
    }

    /// The witness strategy for `player` started at `tau`.
    pub fn produce(
        &self,
        player: Player,
        controls: &Arc<ControlSet<S>>,
        tau: &StoppingRule<S>,
        opponent: Option<&ElementaryStrategy<S>>,
    ) -> Result<ElementaryStrategy<S>> {
        match self {
            WitnessProducer::Constant { index } => {
                ElementaryStrategy::constant_from(player, controls.clone(), *index, tau.clone())
            }
            WitnessProducer::Feedback { table, decisions } => {
                ElementaryStrategy::with_decisions_from(
                    player,
                    controls.clone(),
                    tau.clone(),
                    decisions,
                    ActionSelector::feedback(table.clone()),
                )
            }
            WitnessProducer::Switch {
                condition,
                first,
                second,
            } => {
                let a = first.produce(player, controls, tau, opponent)?;
                let b = second.produce(player, controls, tau, opponent)?;
                ElementaryStrategy::switch(PathEvent::new(tau.clone(), condition.clone()), &a, &b)
            }
            WitnessProducer::BumpSuper {
                condition,
                hat_index,
                t0,
                center,
                half_radius,
                base,
            } => {
                let head = ElementaryStrategy::constant_from(
                    player,
                    controls.clone(),
                    *hat_index,
                    tau.clone(),
                )?;
                let tau1 = bump_exit(tau, condition, *t0, center, *half_radius)?;
                let tail = base.produce(player, controls, &tau1, opponent)?;
                ElementaryStrategy::concatenate(&head, &tail)
            }
            WitnessProducer::BumpSub {
                condition,
                map,
                t0,
                center,
                half_radius,
                base,
            } => {
                let source = opponent.ok_or_else(|| {
                    GameError::Candidate(
                        "response-map witness needs the opponent's strategy".into(),
                    )
                })?;
                let head = ElementaryStrategy::mapped_from(
                    source,
                    tau.clone(),
                    player,
                    controls.clone(),
                    map.clone(),
                )?;
                let tau1 = bump_exit(tau, condition, *t0, center, *half_radius)?;
                let tail = base.produce(player, controls, &tau1, opponent)?;
                ElementaryStrategy::concatenate(&head, &tail)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            WitnessProducer::Constant { index } => format!("constant[{index}]"),
            WitnessProducer::Feedback { decisions, .. } => {
                format!("feedback({} decisions)", decisions.len())
            }
            WitnessProducer::Switch { first, second, .. } => {
                format!("switch({} | {})", first.label(), second.label())
            }
            WitnessProducer::BumpSuper {
                hat_index, base, ..
            } => {
                format!("bump_super([{hat_index}] then {})", base.label())
            }
            WitnessProducer::BumpSub { base, .. } => {
                format!("bump_sub(mapped then {})", base.label())
            }
        }
    }
}

/// `tau_1`: exit of the half ball after `tau` where the bump condition holds
/// at `tau`, and `tau` itself elsewhere.
fn bump_exit<S: Scalar>(
    tau: &StoppingRule<S>,
    condition: &Condition<S>,
    t0: S,
    center: &[S],
    half_radius: S,
) -> Result<StoppingRule<S>> {
    let exit = StoppingRule::first_exit_space_time(t0, center.to_vec(), half_radius, tau.clone())?;
    Ok(StoppingRule::Switch {
        event: Box::new(PathEvent::new(tau.clone(), condition.clone())),
        first: Box::new(exit),
        second: Box::new(tau.clone()),
    })
}

/// A grid function claimed to lie in one of the four semi-solution classes,
/// together with the witness producer the class definition asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SemiSolutionCandidate<S: Scalar> {
    w: Arc<GridFunction<S>>,
    class: SemiClass,
    witness: WitnessProducer<S>,
    bound: S,
}

impl<S: Scalar> SemiSolutionCandidate<S> {
    /// Checks `|w| <= bound` at every node and the terminal side condition
    /// `w(T, .) >= g` (super classes) or `<= g` (sub classes) at every node.
    pub fn new(
        problem: &GameProblem<S>,
        w: Arc<GridFunction<S>>,
        class: SemiClass,
        witness: WitnessProducer<S>,
        bound: S,
    ) -> Result<Self> {
        let c = Self {
            w,
            class,
            witness,
            bound,
        };
        c.check(problem)?;
        Ok(c)
    }

    /// The constant candidate `w = value` with a constant witness.
    pub fn constant(
        problem: &GameProblem<S>,
        grid: crate::field::SpaceTimeGrid<S>,
        value: S,
        class: SemiClass,
        witness_index: usize,
    ) -> Result<Self> {
        Self::new(
            problem,
            Arc::new(GridFunction::constant(grid, value)),
            class,
            WitnessProducer::Constant {
                index: witness_index,
            },
            value.abs(),
        )
    }

    pub fn check(&self, problem: &GameProblem<S>) -> Result<()> {
        if self.w.grid().dim() != problem.dim_state() {
            return Err(GameError::Candidate(format!(
                "grid dimension {} differs from state dimension {}",
                self.w.grid().dim(),
                problem.dim_state()
            )));
        }
        if let Some((i, v)) = self
            .w
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() <= self.bound))
        {
            return Err(GameError::Candidate(format!(
                "value {v} at flat index {i} exceeds the declared bound {}",
                self.bound
            )));
        }
        let grid = self.w.grid();
        let last = grid.n_t();
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            let (w, g) = (self.w.at(last, node), problem.payoff(&x));
            let ok = if self.class.is_super() {
                w >= g
            } else {
                w <= g
            };
            if !ok {
                return Err(GameError::Candidate(format!(
                    "terminal side condition fails at x = {x:?}: w = {w}, g = {g} ({})",
                    self.class
                )));
            }
        }
        Ok(())
    }

    pub fn w(&self) -> &Arc<GridFunction<S>> {
        &self.w
    }

    pub fn class(&self) -> SemiClass {
        self.class
    }

    pub fn witness(&self) -> &WitnessProducer<S> {
        &self.witness
    }

    pub fn bound(&self) -> S {
        self.bound
    }

    pub fn field(&self) -> Field<S> {
        Field::Grid {
            function: self.w.clone(),
        }
    }

    pub fn value(&self, t: S, x: &[S]) -> S {
        self.w.eval(t, x)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| GameError::Serialization(e.to_string()))
    }

    pub fn from_json(problem: &GameProblem<S>, text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| GameError::Serialization(e.to_string()))?;
        c.check(problem)?;
        Ok(c)
    }
}

/// The sampled part of a class definition that [`certify`] checks.
///
/// `pairs` lists `(tau, rho)` rule pairs with `tau <= rho` pathwise;
/// `opponents` is the family of the player without the witness; `prefixes`
/// is the witness player's family played before `tau`.
#[derive(Debug, Clone)]
pub struct CertifySpec<S: Scalar> {
    pub pairs: Vec<(StoppingRule<S>, StoppingRule<S>)>,
    pub opponents: StrategyFamily<S>,
    pub prefixes: StrategyFamily<S>,
    pub starts: Vec<(S, Vec<S>)>,
    pub cfg: SimulationConfig,
    pub bins_per_dim: usize,
    pub min_occupancy: usize,
    pub threshold: f64,
}

impl<S: Scalar> CertifySpec<S> {
    pub fn new(
        pairs: Vec<(StoppingRule<S>, StoppingRule<S>)>,
        opponents: StrategyFamily<S>,
        prefixes: StrategyFamily<S>,
        starts: Vec<(S, Vec<S>)>,
        cfg: SimulationConfig,
        threshold: f64,
    ) -> Self {
        Self {
            pairs,
            opponents,
            prefixes,
            starts,
            cfg,
            bins_per_dim: 16,
            min_occupancy: 50,
            threshold,
        }
    }
}

/// Groups observation indices by a `bins`-per-axis partition of the box
/// spanned by `keys`, visiting cells in lexicographic order and merging
/// consecutive cells until every group holds at least `min_occupancy`
/// observations (a short final remainder joins the previous group).
pub fn bin_groups(keys: &[Vec<f64>], bins: usize, min_occupancy: usize) -> Vec<Vec<usize>> {
    if keys.is_empty() {
        return Vec::new();
    }
    let dims = keys[0].len();
    let bins = bins.max(1);
    let (mut lo, mut hi) = (vec![f64::INFINITY; dims], vec![f64::NEG_INFINITY; dims]);
    for k in keys {
        for a in 0..dims {
            lo[a] = lo[a].min(k[a]);
            hi[a] = hi[a].max(k[a]);
        }
    }
    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        let id: Vec<usize> = (0..dims)
            .map(|a| {
                let w = hi[a] - lo[a];
                if w > 0.0 {
                    (((k[a] - lo[a]) / w * bins as f64).floor() as usize).min(bins - 1)
                } else {
                    0
                }
            })
            .collect();
        cells.entry(id).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    for (_, members) in cells {
        current.extend(members);
        if current.len() >= min_occupancy {
            groups.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        match groups.last_mut() {
            Some(g) => g.extend(current),
            None => groups.push(current),
        }
    }
    groups
}

/// One simulated path's contribution: `(tau', X_tau')` and both stopped values.
struct Observation {
    key: Vec<f64>,
    w_tau: f64,
    w_rho: f64,
}

/// Checks `w(tau', X_tau') >= E[w(rho', X_rho') | tau', X_tau']` (super
/// classes; reversed for sub classes) bin-wise for every rule pair, opponent,
/// prefix strategy and start point of `spec`, with the state process driven
/// by the prefix strategy concatenated at `tau` with the candidate's witness.
pub fn certify<S: Scalar>(
    candidate: &SemiSolutionCandidate<S>,
    problem: &GameProblem<S>,
    spec: &CertifySpec<S>,
) -> Result<CertificateReport> {
    let class = candidate.class;
    let wp = class.witness_player();
    if spec.opponents.player() != wp.opponent() || spec.prefixes.player() != wp {
        return Err(GameError::Spec(format!(
            "{class} needs opponents of {:?} and prefixes of {:?}",
            wp.opponent(),
            wp
        )));
    }
    if spec.pairs.is_empty()
        || spec.starts.is_empty()
        || spec.opponents.is_empty()
        || spec.prefixes.is_empty()
    {
        return Err(GameError::Spec(
            "certification spec has an empty list".into(),
        ));
    }
    let witness_controls = problem.controls(wp).clone();
    let opponent_dependent = matches!(class, SemiClass::SubUpper | SemiClass::SuperLower);
    let field = candidate.field();

    let mut rows = Vec::new();
    let mut worst: Option<(Verdict, f64, f64, f64)> = None;
    for (pi, (tau, rho)) in spec.pairs.iter().enumerate() {
        for (oi, opp) in spec.opponents.members().iter().enumerate() {
            let witness = candidate
                .witness
                .produce(
                    wp,
                    &witness_controls,
                    tau,
                    opponent_dependent.then_some(opp),
                )
                .map_err(|e| GameError::Candidate(format!("witness producer failed: {e}")))?;
            for (qi, pre) in spec.prefixes.members().iter().enumerate() {
                let played = ElementaryStrategy::concatenate(pre, &witness)?;
                let pair = match wp {
                    Player::Two => StrategyPair::new(opp.clone(), played)?,
                    Player::One => StrategyPair::new(played, opp.clone())?,
                };
                for (si, (s, x)) in spec.starts.iter().enumerate() {
                    let obs: Vec<Observation> =
                        map_paths(problem, &pair, *s, x, &spec.cfg, |tr| {
                            let path = &tr.path;
                            let it = tau.index_on_path(path)?;
                            let ir = rho.index_on_path(path)?;
                            if it > ir {
                                return Err(GameError::Spec(format!(
                                    "rule `{}` stops at {} after `{}` at {}",
                                    tau.label(),
                                    path.time(it),
                                    rho.label(),
                                    path.time(ir)
                                )));
                            }
                            let (tt, xt) = (path.time(it), path.state(it));
                            let mut key = vec![tt.f64()];
                            key.extend(xt.iter().map(|v| v.f64()));
                            Ok(Observation {
                                key,
                                w_tau: field.value(tt, xt).f64(),
                                w_rho: field.value(path.time(ir), path.state(ir)).f64(),
                            })
                        })?
                        .into_iter()
                        .collect::<Result<_>>()?;
                    let keys: Vec<Vec<f64>> = obs.iter().map(|o| o.key.clone()).collect();
                    for (bi, group) in bin_groups(&keys, spec.bins_per_dim, spec.min_occupancy)
                        .iter()
                        .enumerate()
                    {
                        let diffs: Vec<f64> = group
                            .iter()
                            .map(|&i| {
                                let o = &obs[i];
                                if class.is_super() {
                                    o.w_tau - o.w_rho
                                } else {
                                    o.w_rho - o.w_tau
                                }
                            })
                            .collect();
                        let st = SampleStats::from_values(&diffs);
                        let mean_tau =
                            group.iter().map(|&i| obs[i].w_tau).sum::<f64>() / group.len() as f64;
                        let verdict = Verdict::from_slack(st.mean, spec.threshold, st.std_error);
                        rows.push(DetailRow::new(
                            format!(
                                "pair {pi} opponent {oi} prefix {qi} start {si} bin {bi} (n={})",
                                group.len()
                            ),
                            mean_tau,
                            st.std_error,
                            st.mean,
                        ));
                        let replace = match worst {
                            None => true,
                            Some((v, slack, _, _)) => {
                                verdict > v || (verdict == v && st.mean < slack)
                            }
                        };
                        if replace {
                            worst = Some((verdict, st.mean, st.std_error, mean_tau));
                        }
                    }
                }
            }
        }
    }
    let (_, slack, se, est) = worst.ok_or_else(|| GameError::Spec("no observations".into()))?;
    let mut report = CertificateReport::new(
        CertificateKind::Supermartingale,
        est,
        se,
        spec.threshold,
        slack,
    );
    report.details = rows;
    report.seeds.push(spec.cfg.rng_seed);
    report.families = vec![spec.opponents.spec_label(), spec.prefixes.spec_label()];
    report.notes.push(format!(
        "class: {class}; witness: {}",
        candidate.witness.label()
    ));
    report.notes.push(format!(
        "bins: {} per axis over (tau, X_tau), at least {} paths each",
        spec.bins_per_dim, spec.min_occupancy
    ));
    report.notes.push(SAMPLED_SPEC_NOTE.into());
    Ok(report)
}

/// Pointwise minimum (super classes) or maximum (sub classes) of two
/// candidates, with the witness of the one attaining it at the rule (ties go
/// to `a`).
pub fn lattice_combine<S: Scalar>(
    a: &SemiSolutionCandidate<S>,
    b: &SemiSolutionCandidate<S>,
) -> Result<SemiSolutionCandidate<S>> {
    if a.class != b.class {
        return Err(GameError::Candidate(format!(
            "classes {} and {} differ",
            a.class, b.class
        )));
    }
    if a.w.grid() != b.w.grid() {
        return Err(GameError::Candidate(
            "candidates live on different grids".into(),
        ));
    }
    if a == b {
        return Ok(a.clone());
    }
    let sup = a.class.is_super();
    let values =
        a.w.zip_with(&b.w, |p, q| if sup { p.min(q) } else { p.max(q) })?;
    let (fa, fb) = (a.field(), b.field());
    let (lhs, rhs) = if sup { (fa, fb) } else { (fb, fa) };
    Ok(SemiSolutionCandidate {
        w: Arc::new(values),
        class: a.class,
        witness: WitnessProducer::Switch {
            condition: Condition::Compare {
                lhs,
                rhs,
                strict: false,
            },
            first: Box::new(a.witness.clone()),
            second: Box::new(b.witness.clone()),
        },
        bound: a.bound.max(b.bound),
    })
}

/// Local modification parameters shared by the two bump constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BumpSpec<S: Scalar> {
    pub phi: TestFunction<S>,
    pub t0: S,
    pub center: Vec<S>,
    pub delta: S,
    pub epsilon: S,
    /// Required margin in the strict test-function inequality.
    pub gap: S,
}

impl<S: Scalar> BumpSpec<S> {
    fn validate(&self, d: usize) -> Result<()> {
        if self.center.len() != d || self.phi.dim() != d {
            return Err(GameError::InvalidArgument(format!(
                "bump center and test function must have dimension {d}"
            )));
        }
        if !(self.epsilon > S::zero()) || !(self.delta >= S::zero()) || !(self.gap >= S::zero()) {
            return Err(GameError::InvalidArgument(
                "bump needs epsilon > 0, delta >= 0 and gap >= 0".into(),
            ));
        }
        Ok(())
    }

    fn distance(&self, t: S, x: &[S]) -> S {
        dist(x, &self.center).max((t - self.t0).abs())
    }

    fn query(&self, t: S, x: &[S]) -> Result<HamiltonianQuery<S>> {
        HamiltonianQuery::new(t, x.to_vec(), self.phi.grad(t, x), self.phi.hessian(t, x))
    }
}

fn refused(t: f64, x: &[f64], reason: String) -> GameError {
    GameError::Refused {
        at: format!("(t = {t}, x = {x:?})"),
        reason,
    }
}

/// Grid points `(level, node, t, x)` with ball distance `< epsilon`.
fn ball_nodes<S: Scalar>(
    grid: &crate::field::SpaceTimeGrid<S>,
    b: &BumpSpec<S>,
) -> Vec<(usize, usize, S, Vec<S>)> {
    let mut out = Vec::new();
    for level in 0..grid.n_levels() {
        let t = grid.time(level);
        if (t - b.t0).abs() >= b.epsilon {
            continue;
        }
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            if b.distance(t, &x) < b.epsilon {
                out.push((level, node, t, x));
            }
        }
    }
    out
}

/// `eta = min(sign * (phi - w))` over grid points with ball distance in
/// `[epsilon / 2, epsilon]`.
fn torus_margin<S: Scalar>(w: &GridFunction<S>, b: &BumpSpec<S>, sign: S) -> Result<S> {
    let grid = w.grid();
    let half = b.epsilon / S::c(2.0);
    let mut eta: Option<(S, f64, Vec<f64>)> = None;
    for level in 0..grid.n_levels() {
        let t = grid.time(level);
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            let r = b.distance(t, &x);
            if r < half || r > b.epsilon {
                continue;
            }
            let m = sign * (b.phi.value(t, &x) - w.at(level, node));
            if eta.as_ref().is_none_or(|(e, _, _)| m < *e) {
                eta = Some((m, t.f64(), x.iter().map(|v| v.f64()).collect()));
            }
        }
    }
    let (eta, t, x) = eta.ok_or_else(|| {
        refused(
            b.t0.f64(),
            &b.center.iter().map(|v| v.f64()).collect::<Vec<_>>(),
            "no grid point in the torus".into(),
        )
    })?;
    if !(eta > b.delta) {
        return Err(refused(
            t,
            &x,
            format!("torus margin {eta} does not exceed delta = {}", b.delta),
        ));
    }
    Ok(eta)
}

/// `w` with `f(w, phi)` on the open-ball nodes, or `None` if no value changes.
fn modified<S: Scalar>(
    w: &GridFunction<S>,
    b: &BumpSpec<S>,
    nodes: &[(usize, usize, S, Vec<S>)],
    f: impl Fn(S, S) -> S,
) -> Result<Option<GridFunction<S>>> {
    let n_nodes = w.grid().n_nodes();
    let mut values = w.values().to_vec();
    let mut changed = false;
    for (level, node, t, x) in nodes {
        let i = level * n_nodes + node;
        let new = f(values[i], b.phi.value(*t, x));
        if new != values[i] {
            values[i] = new;
            changed = true;
        }
    }
    if !changed {
        return Ok(None);
    }
    Ok(Some(GridFunction::new(w.grid().clone(), values)?))
}

fn bound_of<S: Scalar>(w: &GridFunction<S>, old: S) -> S {
    w.values().iter().fold(old, |m, v| m.max(v.abs()))
}

fn point_f64<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(|v| v.f64()).collect()
}

/// Local downward modification `min(phi - delta, w)` on the open ball, for
/// a super-solution of the upper equation.
///
/// Refuses unless, at every grid point of the ball (and at its center),
/// `phi_t + max_u L^{u, v_hat} phi < -gap` for the control `v_hat` that
/// minimises `max_u L^{u, v} phi` at the center, and unless
/// `phi - w > delta` on the grid points of the torus between the half and
/// the full radius. Returns the input unchanged if no node value changes.
pub fn bump_super<S: Scalar>(
    candidate: &SemiSolutionCandidate<S>,
    problem: &GameProblem<S>,
    bump: &BumpSpec<S>,
) -> Result<SemiSolutionCandidate<S>> {
    if candidate.class != SemiClass::SuperUpper {
        return Err(GameError::Candidate(format!(
            "downward bump applies to super_upper candidates, not {}",
            candidate.class
        )));
    }
    bump.validate(problem.dim_state())?;
    let w = &candidate.w;
    let nodes = ball_nodes(w.grid(), bump);
    let delta = bump.delta;
    let Some(values) = modified(w, bump, &nodes, |wv, phi| (phi - delta).min(wv))? else {
        return Ok(candidate.clone());
    };
    let (nu, nv) = (problem.u_set().len(), problem.v_set().len());
    let mut table = vec![S::zero(); nu * nv];
    let fill = |table: &mut [S], t: S, x: &[S]| -> Result<()> {
        let q = bump.query(t, x)?;
        for i in 0..nu {
            for j in 0..nv {
                table[i * nv + j] = problem.generator(&q, i, j)?;
            }
        }
        Ok(())
    };
    fill(&mut table, bump.t0, &bump.center)?;
    let v_hat = minimax(&table, nu, nv, Side::Upper).v_index;
    let centre = std::iter::once((bump.t0, bump.center.clone()));
    for (t, x) in centre.chain(nodes.iter().map(|(_, _, t, x)| (*t, x.clone()))) {
        fill(&mut table, t, &x)?;
        let sup_u = (0..nu)
            .map(|i| table[i * nv + v_hat])
            .fold(S::neg_infinity(), S::max);
        let lhs = bump.phi.dt(t, &x) + sup_u;
        if !(lhs < -bump.gap) {
            return Err(refused(
                t.f64(),
                &point_f64(&x),
                format!(
                    "phi_t + max_u L phi = {lhs} with v index {v_hat} is not below -{}",
                    bump.gap
                ),
            ));
        }
    }
    torus_margin(w, bump, S::one())?;
    let condition = Condition::And {
        all: vec![
            Condition::InBall {
                t0: Some(bump.t0),
                center: bump.center.clone(),
                radius: bump.epsilon,
            },
            Condition::Compare {
                lhs: Field::Test {
                    phi: bump.phi.clone(),
                    shift: -delta,
                },
                rhs: candidate.field(),
                strict: true,
            },
        ],
    };
    let bound = bound_of(&values, candidate.bound);
    SemiSolutionCandidate::new(
        problem,
        Arc::new(values),
        candidate.class,
        WitnessProducer::BumpSuper {
            condition,
            hat_index: v_hat,
            t0: bump.t0,
            center: bump.center.clone(),
            half_radius: bump.epsilon / S::c(2.0),
            base: Box::new(candidate.witness.clone()),
        },
        bound,
    )
}

/// Local upward modification `max(phi + delta, w)` on the open ball, for a
/// sub-solution of the upper equation, with the witness answering the
/// opponent's action `v` by `map[v]`.
///
/// Refuses unless `map` has one entry per control of player two, unless
/// `phi_t + L^{map[v], v} phi > gap` for every `v` at every grid point of
/// the ball (and its center), and unless `w - phi > delta` on the torus.
pub fn bump_sub<S: Scalar>(
    candidate: &SemiSolutionCandidate<S>,
    problem: &GameProblem<S>,
    bump: &BumpSpec<S>,
    map: &[usize],
) -> Result<SemiSolutionCandidate<S>> {
    if candidate.class != SemiClass::SubUpper {
        return Err(GameError::Candidate(format!(
            "upward bump applies to sub_upper candidates, not {}",
            candidate.class
        )));
    }
    bump.validate(problem.dim_state())?;
    let (nu, nv) = (problem.u_set().len(), problem.v_set().len());
    if map.len() != nv {
        return Err(GameError::Refused {
            at: "response map".into(),
            reason: format!(
                "map has {} entries for {nv} controls of player two",
                map.len()
            ),
        });
    }
    if let Some(&bad) = map.iter().find(|&&i| i >= nu) {
        return Err(GameError::Refused {
            at: "response map".into(),
            reason: format!("entry {bad} outside the {nu} controls of player one"),
        });
    }
    let w = &candidate.w;
    let nodes = ball_nodes(w.grid(), bump);
    let delta = bump.delta;
    let Some(values) = modified(w, bump, &nodes, |wv, phi| (phi + delta).max(wv))? else {
        return Ok(candidate.clone());
    };
    let centre = std::iter::once((bump.t0, bump.center.clone()));
    for (t, x) in centre.chain(nodes.iter().map(|(_, _, t, x)| (*t, x.clone()))) {
        let q = bump.query(t, &x)?;
        let phi_t = bump.phi.dt(t, &x);
        for (j, &i) in map.iter().enumerate() {
            let lhs = phi_t + problem.generator(&q, i, j)?;
            if !(lhs > bump.gap) {
                return Err(refused(
                    t.f64(),
                    &point_f64(&x),
                    format!(
                        "phi_t + L phi = {lhs} at (u {i}, v {j}) is not above {}",
                        bump.gap
                    ),
                ));
            }
        }
    }
    torus_margin(w, bump, -S::one())?;
    let condition = Condition::And {
        all: vec![
            Condition::InBall {
                t0: Some(bump.t0),
                center: bump.center.clone(),
                radius: bump.epsilon,
            },
            Condition::Compare {
                lhs: candidate.field(),
                rhs: Field::Test {
                    phi: bump.phi.clone(),
                    shift: delta,
                },
                strict: true,
            },
        ],
    };
    let bound = bound_of(&values, candidate.bound);
    SemiSolutionCandidate::new(
        problem,
        Arc::new(values),
        candidate.class,
        WitnessProducer::BumpSub {
            condition,
            map: map.to_vec(),
            t0: bump.t0,
            center: bump.center.clone(),
            half_radius: bump.epsilon / S::c(2.0),
            base: Box::new(candidate.witness.clone()),
        },
        bound,
    )
}
