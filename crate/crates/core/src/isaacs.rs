//! Explicit monotone finite-difference solver for the upper and lower Isaacs
//! equations `-v_t - H(t, x, v_x, v_xx) = 0`, `v(T, .) = g`, in one or two
//! space dimensions.
//!
//! Every control pair's update is written as a convex combination of
//! neighbouring values with non-negative weights, and the discrete minimax is
//! taken over those updated values. Floating-point rounding is monotone, so
//! comparison of terminal data, side ordering and the maximum principle hold
//! exactly rather than up to a tolerance.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{minimax, ControlSet, GameProblem, Player, Side};
use crate::error::{GameError, Result};
use crate::field::{Axis, GridFunction, SpaceTimeGrid};
use crate::game_mc::{
    estimate_matrix, CertificateKind, CertificateReport, DetailRow, StoppedValue, StrategyFamily,
};
use crate::pathspace::{ActionSelector, ElementaryStrategy, FeedbackTable, Field, StoppingRule};
use crate::scalar::Scalar;
use crate::sde::{fmt_num, SimulationConfig};

/// Treatment of the spatial boundary of the truncated box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Boundary nodes keep their terminal value `g` at every level.
    #[default]
    ClampedTerminal,
    /// Zero-order one-sided extrapolation: a missing neighbour takes the
    /// value of the nearest node inside the box.
    Extrapolated,
}

/// Stability numbers of a grid for a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflInfo {
    pub dt: f64,
    /// Largest per-node monotone rate `sum_i A_ii/h_i^2 - |A_12|/(h_1 h_2) + sum_i |b_i|/h_i`
    /// seen on the sampled coefficients, with `A = sigma sigma^T`.
    pub max_rate: f64,
    /// `1 / max_rate`: the largest monotone time step.
    pub dt_bound: f64,
    /// `dt * max_rate`; at most one for a monotone scheme.
    pub courant: f64,
}

const MONOTONE_SLACK: f64 = 1e-12;

/// Per-node coefficient weights of one control pair.
struct Stencil<S> {
    center: S,
    /// `(flat neighbour offset in multi-index units, weight)`.
    neighbours: [(isize, isize, S); 8],
    count: usize,
    rate: S,
}

/// Builds the monotone stencil weights (without the factor `dt`) for drift
/// `b` and `A = sigma sigma^T`. Returns `Err(detail)` if the cross term is not
/// diagonally dominant.
fn stencil<S: Scalar>(
    d: usize,
    h: &[S],
    b: &[S],
    a: &[S],
) -> std::result::Result<Stencil<S>, String> {
    let half = S::c(0.5);
    let zero = S::zero();
    let mut st = Stencil {
        center: zero,
        neighbours: [(0, 0, zero); 8],
        count: 0,
        rate: zero,
    };
    let push = |st: &mut Stencil<S>, di: isize, dj: isize, w: S| {
        if w > zero {
            st.neighbours[st.count] = (di, dj, w);
            st.count += 1;
        }
    };
    if d == 1 {
        let (h1, a11, b1) = (h[0], a[0], b[0]);
        let diff = half * a11 / (h1 * h1);
        let up = b1.max(zero) / h1;
        let down = (-b1).max(zero) / h1;
        push(&mut st, 1, 0, diff + up);
        push(&mut st, -1, 0, diff + down);
        st.rate = a11 / (h1 * h1) + b1.abs() / h1;
    } else {
        let (h1, h2) = (h[0], h[1]);
        let (a11, a12, a22) = (a[0], a[1], a[3]);
        let cross = a12.abs() / (h1 * h2);
        let slack = S::c(1.0 - MONOTONE_SLACK);
        if a11 / (h1 * h1) < cross * slack || a22 / (h2 * h2) < cross * slack {
            return Err(format!(
                "A11/h1^2={:e}, A22/h2^2={:e}, |A12|/(h1 h2)={:e}",
                (a11 / (h1 * h1)).f64(),
                (a22 / (h2 * h2)).f64(),
                cross.f64()
            ));
        }
        let ax1 = (half * a11 / (h1 * h1) - half * cross).max(zero);
        let ax2 = (half * a22 / (h2 * h2) - half * cross).max(zero);
        push(&mut st, 1, 0, ax1 + b[0].max(zero) / h1);
        push(&mut st, -1, 0, ax1 + (-b[0]).max(zero) / h1);
        push(&mut st, 0, 1, ax2 + b[1].max(zero) / h2);
        push(&mut st, 0, -1, ax2 + (-b[1]).max(zero) / h2);
        let diag = half * cross;
        if a12 > zero {
            push(&mut st, 1, 1, diag);
            push(&mut st, -1, -1, diag);
        } else if a12 < zero {
            push(&mut st, 1, -1, diag);
            push(&mut st, -1, 1, diag);
        }
        st.rate = (a11 / (h1 * h1) + a22 / (h2 * h2) - cross).max(zero)
            + b[0].abs() / h1
            + b[1].abs() / h2;
    }
    st.center = -st.rate;
    Ok(st)
}

fn sigma_sigma_t<S: Scalar>(d: usize, dn: usize, sig: &[S], a: &mut [S]) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = S::zero();
            for k in 0..dn {
                acc += sig[i * dn + k] * sig[j * dn + k];
            }
            a[i * d + j] = acc;
        }
    }
}

fn check_grid_for<S: Scalar>(problem: &GameProblem<S>, grid: &SpaceTimeGrid<S>) -> Result<()> {
    if grid.dim() != problem.dim_state() {
        return Err(GameError::InvalidArgument(format!(
            "grid dimension {} differs from state dimension {}",
            grid.dim(),
            problem.dim_state()
        )));
    }
    if grid.horizon() != problem.horizon() {
        return Err(GameError::InvalidArgument(format!(
            "grid horizon {} differs from problem horizon {}",
            grid.horizon(),
            problem.horizon()
        )));
    }
    for set in [problem.u_set(), problem.v_set()] {
        if set.len() > u16::MAX as usize + 1 {
            return Err(GameError::InvalidControlSet {
                label: set.label().to_string(),
                reason: "too many points for stored saddle indices".into(),
            });
        }
    }
    Ok(())
}

/// Largest monotone rate over all nodes, all control pairs and the sampled
/// times.
pub fn max_monotone_rate<S: Scalar>(
    problem: &GameProblem<S>,
    axes: &[Axis<S>],
    times: &[S],
) -> Result<S> {
    let probe = SpaceTimeGrid::new(axes.to_vec(), 1, problem.horizon())?;
    let d = probe.dim();
    let dn = problem.dim_noise();
    let h: Vec<S> = axes.iter().map(|a| a.spacing()).collect();
    let mut worst = S::zero();
    let (nu, nv) = (problem.u_set().len(), problem.v_set().len());
    let mut b = vec![S::zero(); d];
    let mut sig = vec![S::zero(); d * dn];
    let mut a = vec![S::zero(); d * d];
    for &t in times {
        for node in 0..probe.n_nodes() {
            let x = probe.node_coords(node);
            for ui in 0..nu {
                for vi in 0..nv {
                    problem.eval(t, &x, ui, vi, &mut b, &mut sig)?;
                    sigma_sigma_t(d, dn, &sig, &mut a);
                    let st = stencil(d, &h, &b, &a).map_err(|detail| {
                        GameError::NotDiagonallyDominant {
                            node,
                            t: t.f64(),
                            detail,
                        }
                    })?;
                    worst = worst.max(st.rate);
                }
            }
        }
    }
    Ok(worst)
}

fn sample_times<S: Scalar>(horizon: S) -> Vec<S> {
    crate::scalar::linspace(S::zero(), horizon, 5)
}

impl<S: Scalar> SpaceTimeGrid<S> {
    /// Grid with `n_t` steps, checked against the monotone time-step bound
    /// computed from coefficients sampled at every node and five times.
    pub fn for_problem(problem: &GameProblem<S>, axes: Vec<Axis<S>>, n_t: usize) -> Result<Self> {
        let grid = SpaceTimeGrid::new(axes, n_t, problem.horizon())?;
        check_grid_for(problem, &grid)?;
        let rate = max_monotone_rate(problem, grid.axes(), &sample_times(problem.horizon()))?;
        let dt = grid.dt();
        if dt * rate > S::one() + S::c(MONOTONE_SLACK) {
            return Err(GameError::Cfl {
                dt: dt.f64(),
                bound: (S::one() / rate).f64(),
            });
        }
        Ok(grid)
    }

    /// Grid with the fewest steps satisfying `dt * max_rate <= safety`.
    pub fn auto_for_problem(
        problem: &GameProblem<S>,
        axes: Vec<Axis<S>>,
        safety: S,
    ) -> Result<Self> {
        if !(safety > S::zero() && safety <= S::one()) {
            return Err(GameError::InvalidArgument(format!(
                "CFL safety factor must lie in (0, 1], got {safety}"
            )));
        }
        let rate = max_monotone_rate(problem, &axes, &sample_times(problem.horizon()))?;
        let steps = (problem.horizon() * rate / safety)
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        Self::for_problem(problem, axes, steps)
    }
}

/// Solution of one Isaacs equation on a grid, with the per-node saddle
/// control indices chosen by the discrete minimax.
#[derive(Debug, Clone)]
pub struct ValueGrid<S: Scalar> {
    values: GridFunction<S>,
    saddle_u: Vec<u16>,
    saddle_v: Vec<u16>,
    side: Side,
    boundary: Boundary,
    problem_name: String,
    u_set: Arc<ControlSet<S>>,
    v_set: Arc<ControlSet<S>>,
    cfl: CflInfo,
}

/// Metadata written next to a value grid's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValueGridHeader<S: Scalar> {
    pub problem: String,
    pub side: Side,
    pub boundary: Boundary,
    pub grid: SpaceTimeGrid<S>,
    pub cfl: CflInfo,
    pub u_set: String,
    pub v_set: String,
}

impl<S: Scalar> ValueGrid<S> {
    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        self.values.grid()
    }

    pub fn values(&self) -> &GridFunction<S> {
        &self.values
    }

    pub fn into_values(self) -> GridFunction<S> {
        self.values
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn cfl(&self) -> CflInfo {
        self.cfl
    }

    pub fn saddle_u(&self) -> &[u16] {
        &self.saddle_u
    }

    pub fn saddle_v(&self) -> &[u16] {
        &self.saddle_v
    }

    pub fn u_set(&self) -> &Arc<ControlSet<S>> {
        &self.u_set
    }

    pub fn v_set(&self) -> &Arc<ControlSet<S>> {
        &self.v_set
    }

    /// Multilinear interpolation of the values, clamped to the box.
    pub fn value_at(&self, t: S, x: &[S]) -> S {
        self.values.eval(t, x)
    }

    pub fn saddle_at(&self, level: usize, node: usize) -> (usize, usize) {
        let i = level * self.grid().n_nodes() + node;
        (self.saddle_u[i] as usize, self.saddle_v[i] as usize)
    }

    pub fn feedback_table(&self, player: Player) -> Result<FeedbackTable<S>> {
        let idx = match player {
            Player::One => self.saddle_u.clone(),
            Player::Two => self.saddle_v.clone(),
        };
        FeedbackTable::new(self.grid().clone(), idx)
    }

    pub fn header(&self) -> ValueGridHeader<S> {
        ValueGridHeader {
            problem: self.problem_name.clone(),
            side: self.side,
            boundary: self.boundary,
            grid: self.grid().clone(),
            cfl: self.cfl,
            u_set: self.u_set.label().to_string(),
            v_set: self.v_set.label().to_string(),
        }
    }

    pub fn header_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.header())
            .map_err(|e| GameError::Serialization(e.to_string()))
    }

    /// CSV with columns `t, x_1..x_d, value, saddle_u, saddle_v`, one row per
    /// (level, node), levels ascending.
    pub fn write_csv(&self, w: impl Write) -> std::io::Result<()> {
        let levels: Vec<usize> = (0..self.grid().n_levels()).collect();
        self.write_csv_levels(w, &levels)
    }

    /// Evenly strided level indices, at most `max_levels` of them, always
    /// including the first and the last level.
    pub fn strided_levels(&self, max_levels: usize) -> Vec<usize> {
        let n = self.grid().n_levels();
        let k = max_levels.max(2).min(n);
        if k == n {
            return (0..n).collect();
        }
        let mut out: Vec<usize> = (0..k).map(|j| j * (n - 1) / (k - 1)).collect();
        out.dedup();
        out
    }

    /// As [`ValueGrid::write_csv`], restricted to the listed levels.
    pub fn write_csv_levels(&self, mut w: impl Write, levels: &[usize]) -> std::io::Result<()> {
        let g = self.grid();
        let mut header = vec!["t".to_string()];
        header.extend((1..=g.dim()).map(|i| format!("x_{i}")));
        header.extend(["value", "saddle_u", "saddle_v"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let coords: Vec<Vec<S>> = (0..g.n_nodes()).map(|n| g.node_coords(n)).collect();
        for &level in levels.iter().filter(|&&l| l < g.n_levels()) {
            let t = fmt_num(g.time(level).f64());
            for (node, x) in coords.iter().enumerate() {
                let i = level * g.n_nodes() + node;
                let mut row = String::with_capacity(96);
                row.push_str(&t);
                for c in x {
                    row.push(',');
                    row.push_str(&fmt_num(c.f64()));
                }
                row.push(',');
                row.push_str(&fmt_num(self.values.at(level, node).f64()));
                row.push_str(&format!(",{},{}", self.saddle_u[i], self.saddle_v[i]));
                writeln!(w, "{row}")?;
            }
        }
        Ok(())
    }
}

struct NodeInfo<S> {
    coords: Vec<S>,
    multi: [isize; 2],
    boundary: bool,
}

struct Solver<'a, S: Scalar> {
    problem: &'a GameProblem<S>,
    grid: &'a SpaceTimeGrid<S>,
    side: Side,
    boundary: Boundary,
    h: Vec<S>,
    nodes: Vec<NodeInfo<S>>,
    dims: [isize; 2],
    g_lo: S,
    g_hi: S,
}

struct Workspace<S> {
    b: Vec<S>,
    sig: Vec<S>,
    a: Vec<S>,
    table: Vec<S>,
}

impl<'a, S: Scalar> Solver<'a, S> {
    fn flat(&self, i: isize, j: isize) -> usize {
        let ci = i.clamp(0, self.dims[0] - 1);
        let cj = j.clamp(0, self.dims[1] - 1);
        (ci * self.dims[1] + cj) as usize
    }

    fn workspace(&self) -> Workspace<S> {
        let d = self.problem.dim_state();
        let dn = self.problem.dim_noise();
        Workspace {
            b: vec![S::zero(); d],
            sig: vec![S::zero(); d * dn],
            a: vec![S::zero(); d * d],
            table: vec![S::zero(); self.problem.u_set().len() * self.problem.v_set().len()],
        }
    }

    /// Updated value and saddle at one node from the next level's values.
    fn node_update(
        &self,
        ws: &mut Workspace<S>,
        node: usize,
        t: S,
        next: &[S],
    ) -> Result<(S, u16, u16)> {
        let d = self.problem.dim_state();
        let dn = self.problem.dim_noise();
        let dt = self.grid.dt();
        let info = &self.nodes[node];
        let (nu, nv) = (self.problem.u_set().len(), self.problem.v_set().len());
        let vc = next[node];
        for ui in 0..nu {
            for vi in 0..nv {
                self.problem
                    .eval(t, &info.coords, ui, vi, &mut ws.b, &mut ws.sig)?;
                sigma_sigma_t(d, dn, &ws.sig, &mut ws.a);
                let st = stencil(d, &self.h, &ws.b, &ws.a).map_err(|detail| {
                    GameError::NotDiagonallyDominant {
                        node,
                        t: t.f64(),
                        detail,
                    }
                })?;
                let c0 = S::one() + dt * st.center;
                if c0 < -S::c(MONOTONE_SLACK) {
                    return Err(GameError::Cfl {
                        dt: dt.f64(),
                        bound: (S::one() / st.rate).f64(),
                    });
                }
                let mut f = c0.max(S::zero()) * vc;
                for &(di, dj, w) in &st.neighbours[..st.count] {
                    let nb = self.flat(info.multi[0] + di, info.multi[1] + dj);
                    f += dt * w * next[nb];
                }
                ws.table[ui * nv + vi] = f;
            }
        }
        let mm = minimax(&ws.table, nu, nv, self.side);
        let value = if info.boundary && self.boundary == Boundary::ClampedTerminal {
            next[node]
        } else {
            mm.value.max(self.g_lo).min(self.g_hi)
        };
        Ok((value, mm.u_index as u16, mm.v_index as u16))
    }

    fn level(&self, t: S, next: &[S]) -> Result<(Vec<S>, Vec<u16>, Vec<u16>)> {
        let out: Vec<(S, u16, u16)> = (0..self.nodes.len())
            .into_par_iter()
            .map_init(
                || self.workspace(),
                |ws, node| self.node_update(ws, node, t, next),
            )
            .collect::<Result<_>>()?;
        let mut vals = Vec::with_capacity(out.len());
        let mut us = Vec::with_capacity(out.len());
        let mut vs = Vec::with_capacity(out.len());
        for (v, u, w) in out {
            vals.push(v);
            us.push(u);
            vs.push(w);
        }
        Ok((vals, us, vs))
    }
}

/// Backward time stepping from `v(T, .) = g`.
pub fn solve<S: Scalar>(
    problem: &GameProblem<S>,
    side: Side,
    grid: &SpaceTimeGrid<S>,
    boundary: Boundary,
) -> Result<ValueGrid<S>> {
    check_grid_for(problem, grid)?;
    let d = grid.dim();
    let dims = [
        grid.axes()[0].nodes as isize,
        if d == 2 {
            grid.axes()[1].nodes as isize
        } else {
            1
        },
    ];
    let nodes: Vec<NodeInfo<S>> = (0..grid.n_nodes())
        .map(|n| {
            let m = grid.multi_index(n);
            NodeInfo {
                coords: grid.node_coords(n),
                multi: [m[0] as isize, if d == 2 { m[1] as isize } else { 0 }],
                boundary: grid.is_boundary(n),
            }
        })
        .collect();
    let terminal: Vec<S> = nodes.iter().map(|n| problem.payoff(&n.coords)).collect();
    if let Some(i) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(GameError::InvalidProblem(format!(
            "payoff is not finite at node {i}"
        )));
    }
    let g_lo = terminal.iter().copied().fold(S::infinity(), S::min);
    let g_hi = terminal.iter().copied().fold(S::neg_infinity(), S::max);
    let solver = Solver {
        problem,
        grid,
        side,
        boundary,
        h: grid.axes().iter().map(|a| a.spacing()).collect(),
        nodes,
        dims,
        g_lo,
        g_hi,
    };

    let nn = grid.n_nodes();
    let nl = grid.n_levels();
    let mut values = vec![S::zero(); nl * nn];
    let mut saddle_u = vec![0u16; nl * nn];
    let mut saddle_v = vec![0u16; nl * nn];
    values[(nl - 1) * nn..].copy_from_slice(&terminal);
    // Terminal-level saddles: the minimax of the generator applied to g.
    let (_, us, vs) = solver.level(grid.time(nl - 1), &terminal)?;
    saddle_u[(nl - 1) * nn..].copy_from_slice(&us);
    saddle_v[(nl - 1) * nn..].copy_from_slice(&vs);

    let mut max_rate = S::zero();
    for level in (0..nl - 1).rev() {
        let t = grid.time(level);
        let next = values[(level + 1) * nn..(level + 2) * nn].to_vec();
        let (vals, us, vs) = solver.level(t, &next)?;
        values[level * nn..(level + 1) * nn].copy_from_slice(&vals);
        saddle_u[level * nn..(level + 1) * nn].copy_from_slice(&us);
        saddle_v[level * nn..(level + 1) * nn].copy_from_slice(&vs);
        if level == 0 || level + 2 == nl {
            max_rate = max_rate.max(max_monotone_rate(problem, grid.axes(), &[t])?);
        }
    }
    let dt = grid.dt().f64();
    let mr = max_rate.f64();
    let cfl = CflInfo {
        dt,
        max_rate: mr,
        dt_bound: if mr > 0.0 { 1.0 / mr } else { f64::INFINITY },
        courant: dt * mr,
    };
    Ok(ValueGrid {
        values: GridFunction::new(grid.clone(), values)?,
        saddle_u,
        saddle_v,
        side,
        boundary,
        problem_name: problem.name().to_string(),
        u_set: problem.u_set().clone(),
        v_set: problem.v_set().clone(),
        cfl,
    })
}

/// Grid-feedback strategies reading the stored saddle indices at the nearest
/// (level, node), re-deciding at `decision_times` (the first one is the
/// start).
pub fn extract_feedback<S: Scalar>(
    vg: &ValueGrid<S>,
    decision_times: &[S],
) -> Result<(ElementaryStrategy<S>, ElementaryStrategy<S>)> {
    if decision_times.is_empty() {
        return Err(GameError::InvalidArgument(
            "empty decision-time list".into(),
        ));
    }
    let build = |player: Player, set: &Arc<ControlSet<S>>| -> Result<ElementaryStrategy<S>> {
        if set.len() == 1 {
            return ElementaryStrategy::with_decisions(
                player,
                set.clone(),
                &decision_times[..1],
                ActionSelector::constant(0),
            );
        }
        let table = Arc::new(vg.feedback_table(player)?);
        ElementaryStrategy::feedback(player, set.clone(), table, decision_times)
    };
    Ok((
        build(Player::One, &vg.u_set)?,
        build(Player::Two, &vg.v_set)?,
    ))
}

/// Feedback strategy of `player` started at the rule `start`, re-deciding at
/// the listed times after it.
pub fn feedback_from<S: Scalar>(
    vg: &ValueGrid<S>,
    player: Player,
    start: StoppingRule<S>,
    decision_times: &[S],
) -> Result<ElementaryStrategy<S>> {
    let set = match player {
        Player::One => vg.u_set.clone(),
        Player::Two => vg.v_set.clone(),
    };
    let table = Arc::new(vg.feedback_table(player)?);
    ElementaryStrategy::with_decisions_from(
        player,
        set,
        start,
        decision_times,
        ActionSelector::feedback(table),
    )
}

/// DPP residual `|opt E[v(rho, X_rho)] - v(s, x)|` over the finite families,
/// with `inf_v sup_u` for the upper side and `sup_u inf_v` for the lower.
#[allow(clippy::too_many_arguments)]
pub fn dpp_residual<S: Scalar>(
    vg: &ValueGrid<S>,
    rho: &StoppingRule<S>,
    problem: &GameProblem<S>,
    cfg: &SimulationConfig,
    fam_u: &StrategyFamily<S>,
    fam_v: &StrategyFamily<S>,
    s: S,
    x: &[S],
    tolerance: f64,
) -> Result<CertificateReport> {
    let functional = StoppedValue::new(
        Field::Grid {
            function: Arc::new(vg.values().clone()),
        },
        rho.clone(),
    );
    let m = estimate_matrix(problem, fam_u, fam_v, s, x, cfg, &functional)?;
    let (est, se, ui, vi) = m.side_value(vg.side());
    let target = vg.value_at(s, x).f64();
    let residual = (est - target).abs();
    let mut report = CertificateReport::new(CertificateKind::Dpp, est, se, tolerance, -residual);
    report
        .details
        .push(DetailRow::new("pde_value", target, 0.0, 0.0));
    report.details.push(DetailRow::new(
        format!("selected (u#{ui}, v#{vi})"),
        est,
        se,
        -residual,
    ));
    report.seeds.push(cfg.rng_seed);
    report.families = vec![fam_u.spec_label(), fam_v.spec_label()];
    report.notes.push(format!("rule: {}", rho.label()));
    report.notes.push(format!("side: {}", vg.side()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FnCoefficients;

    fn problem(sigma: f64, u: ControlSet<f64>, v: ControlSet<f64>) -> GameProblem<f64> {
        let c = FnCoefficients::new(
            |_t, _x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] + v[0],
            move |_t, _x: &[f64], _u: &[f64], _v: &[f64], out: &mut [f64]| out[0] = sigma,
            |x: &[f64]| (-x[0] * x[0]).exp(),
        );
        GameProblem::new("t", 1, 1, Arc::new(c), u, v, 1.0, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn stencil_weights_sum_to_rate() {
        let st = stencil(2, &[0.1, 0.2], &[0.3, -0.4], &[1.0, 0.5, 0.5, 2.0]).unwrap();
        let sum: f64 = st.neighbours[..st.count].iter().map(|n| n.2).sum();
        assert!((sum - st.rate).abs() < 1e-12);
        assert!(stencil(2, &[0.1, 0.1], &[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn cfl_is_enforced() {
        let p = problem(
            0.0,
            ControlSet::linspace("U", -1.0, 1.0, 3).unwrap(),
            ControlSet::singleton("V", vec![0.0]).unwrap(),
        );
        let axes = vec![Axis::new(-1.0, 1.0, 21)];
        // h = 0.1, rate 10, so dt must be <= 0.1.
        assert!(matches!(
            SpaceTimeGrid::for_problem(&p, axes.clone(), 5),
            Err(GameError::Cfl { .. })
        ));
        assert!(SpaceTimeGrid::for_problem(&p, axes.clone(), 10).is_ok());
        let g = SpaceTimeGrid::auto_for_problem(&p, axes, 0.9).unwrap();
        assert_eq!(g.n_t(), 12);
    }

    #[test]
    fn null_dynamics_keep_g() {
        let p = problem(
            0.0,
            ControlSet::singleton("U", vec![0.0]).unwrap(),
            ControlSet::singleton("V", vec![0.0]).unwrap(),
        );
        let grid = SpaceTimeGrid::for_problem(&p, vec![Axis::new(-2.0, 2.0, 41)], 7).unwrap();
        let vg = solve(&p, Side::Upper, &grid, Boundary::Extrapolated).unwrap();
        for level in 0..grid.n_levels() {
            for node in 0..grid.n_nodes() {
                assert_eq!(
                    vg.values().at(level, node),
                    vg.values().at(grid.n_t(), node)
                );
            }
        }
    }

    #[test]
    fn csv_rows_match_grid() {
        let p = problem(
            0.0,
            ControlSet::singleton("U", vec![0.0]).unwrap(),
            ControlSet::singleton("V", vec![0.0]).unwrap(),
        );
        let grid = SpaceTimeGrid::for_problem(&p, vec![Axis::new(-1.0, 1.0, 5)], 2).unwrap();
        let vg = solve(&p, Side::Lower, &grid, Boundary::ClampedTerminal).unwrap();
        let mut buf = Vec::new();
        vg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(text.starts_with("t,x_1,value,saddle_u,saddle_v\n"));
        assert!(vg.header_json().unwrap().contains("\"side\": \"lower\""));
    }

    #[test]
    fn strided_levels_keep_both_ends() {
        let p = problem(
            0.0,
            ControlSet::singleton("U", vec![0.0]).unwrap(),
            ControlSet::singleton("V", vec![0.0]).unwrap(),
        );
        let grid = SpaceTimeGrid::for_problem(&p, vec![Axis::new(-1.0, 1.0, 5)], 10).unwrap();
        let vg = solve(&p, Side::Upper, &grid, Boundary::Extrapolated).unwrap();
        assert_eq!(vg.strided_levels(3), vec![0, 5, 10]);
        assert_eq!(vg.strided_levels(100).len(), 11);
        let mut buf = Vec::new();
        vg.write_csv_levels(&mut buf, &[0, 10]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 5);
    }
}
