//! Game specification and the lower/upper Hamiltonians.
//!
//! Control sets are finite point lists, so every `sup`/`inf` is an exact
//! enumeration. Ties in the minimax are broken by the lowest point index.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::scalar::{dist, linspace, norm, Scalar};

/// Default upper bound on the number of points in a control set.
pub const DEFAULT_CONTROL_CAP: usize = 256;

/// Which Isaacs equation / value a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `inf_v sup_u`.
    #[default]
    Upper,
    /// `sup_u inf_v`.
    Lower,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

/// Player one maximizes the payoff, player two minimizes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// A finite, non-empty set of control points of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlSet<S: Scalar> {
    label: String,
    dim: usize,
    points: Vec<Vec<S>>,
}

impl<S: Scalar> ControlSet<S> {
    pub fn new(label: impl Into<String>, points: Vec<Vec<S>>) -> Result<Self> {
        Self::with_cap(label, points, DEFAULT_CONTROL_CAP)
    }

    pub fn with_cap(label: impl Into<String>, points: Vec<Vec<S>>, cap: usize) -> Result<Self> {
        let label = label.into();
        let bad = |reason: String| GameError::InvalidControlSet {
            label: label.clone(),
            reason,
        };
        if points.is_empty() {
            return Err(bad("empty".into()));
        }
        if points.len() > cap {
            return Err(bad(format!("{} points exceed cap {cap}", points.len())));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(bad("zero-dimensional points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(bad(format!(
                "point {i} has dimension {} != {dim}",
                points[i].len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite coordinate".into()));
        }
        Ok(Self { label, dim, points })
    }

    /// Evenly spaced scalar controls on `[lo, hi]`.
    pub fn linspace(label: impl Into<String>, lo: S, hi: S, n: usize) -> Result<Self> {
        Self::new(
            label,
            linspace(lo, hi, n).into_iter().map(|p| vec![p]).collect(),
        )
    }

    pub fn singleton(label: impl Into<String>, point: Vec<S>) -> Result<Self> {
        Self::new(label, vec![point])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[S] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }
}

/// Drift, diffusion and terminal payoff of the controlled state equation.
///
/// Implementations must be pure: identical arguments give identical outputs,
/// and concurrent calls from several threads are allowed.
pub trait Coefficients<S: Scalar>: Send + Sync {
    /// Writes `b(t, x, u, v)` (length `d`) into `out`.
    fn drift(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]);

    /// Writes `sigma(t, x, u, v)` as a row-major `d x d'` matrix into `out`.
    fn diffusion(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]);

    /// Terminal payoff `g(x)` paid by player two to player one.
    fn payoff(&self, x: &[S]) -> S;
}

type DriftFn<S> = dyn Fn(S, &[S], &[S], &[S], &mut [S]) + Send + Sync;
type PayoffFn<S> = dyn Fn(&[S]) -> S + Send + Sync;

/// Closure-backed [`Coefficients`].
pub struct FnCoefficients<S: Scalar> {
    drift: Box<DriftFn<S>>,
    diffusion: Box<DriftFn<S>>,
    payoff: Box<PayoffFn<S>>,
}

impl<S: Scalar> FnCoefficients<S> {
    pub fn new(
        drift: impl Fn(S, &[S], &[S], &[S], &mut [S]) + Send + Sync + 'static,
        diffusion: impl Fn(S, &[S], &[S], &[S], &mut [S]) + Send + Sync + 'static,
        payoff: impl Fn(&[S]) -> S + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            payoff: Box::new(payoff),
        }
    }
}

impl<S: Scalar> Coefficients<S> for FnCoefficients<S> {
    fn drift(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        (self.drift)(t, x, u, v, out)
    }

    fn diffusion(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        (self.diffusion)(t, x, u, v, out)
    }

    fn payoff(&self, x: &[S]) -> S {
        (self.payoff)(x)
    }
}

/// Full specification of a two-player zero-sum game.
#[derive(Clone)]
pub struct GameProblem<S: Scalar> {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    coefficients: Arc<dyn Coefficients<S>>,
    u_set: Arc<ControlSet<S>>,
    v_set: Arc<ControlSet<S>>,
    horizon: S,
    payoff_bounds: (S, S),
}

impl<S: Scalar> fmt::Debug for GameProblem<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameProblem")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("u_set", &self.u_set.label())
            .field("v_set", &self.v_set.label())
            .field("horizon", &self.horizon)
            .field("payoff_bounds", &self.payoff_bounds)
            .finish()
    }
}

impl<S: Scalar> GameProblem<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        coefficients: Arc<dyn Coefficients<S>>,
        u_set: ControlSet<S>,
        v_set: ControlSet<S>,
        horizon: S,
        payoff_bounds: (S, S),
    ) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(GameError::InvalidProblem(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(GameError::InvalidProblem(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let (lo, hi) = payoff_bounds;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GameError::InvalidProblem(format!(
                "payoff bounds [{lo}, {hi}] are not a finite interval"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim_state,
            dim_noise,
            coefficients,
            u_set: Arc::new(u_set),
            v_set: Arc::new(v_set),
            horizon,
            payoff_bounds,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn payoff_bounds(&self) -> (S, S) {
        self.payoff_bounds
    }

    pub fn u_set(&self) -> &Arc<ControlSet<S>> {
        &self.u_set
    }

    pub fn v_set(&self) -> &Arc<ControlSet<S>> {
        &self.v_set
    }

    pub fn controls(&self, player: Player) -> &Arc<ControlSet<S>> {
        match player {
            Player::One => &self.u_set,
            Player::Two => &self.v_set,
        }
    }

    pub fn coefficients(&self) -> &Arc<dyn Coefficients<S>> {
        &self.coefficients
    }

    pub fn payoff(&self, x: &[S]) -> S {
        self.coefficients.payoff(x)
    }

    /// Evaluates drift and diffusion for control indices `(ui, vi)`, failing
    /// on any non-finite entry.
    pub fn eval(
        &self,
        t: S,
        x: &[S],
        ui: usize,
        vi: usize,
        drift: &mut [S],
        diffusion: &mut [S],
    ) -> Result<()> {
        let u = self.u_set.point(ui);
        let v = self.v_set.point(vi);
        self.coefficients.drift(t, x, u, v, drift);
        self.coefficients.diffusion(t, x, u, v, diffusion);
        if drift.iter().chain(diffusion.iter()).any(|c| !c.is_finite()) {
            return Err(self.non_finite(t, x, ui, vi));
        }
        Ok(())
    }

    pub(crate) fn non_finite(&self, t: S, x: &[S], ui: usize, vi: usize) -> GameError {
        GameError::NonFiniteCoefficient {
            t: t.f64(),
            x: x.iter().map(|c| c.f64()).collect(),
            u: self.u_set.point(ui).iter().map(|c| c.f64()).collect(),
            v: self.v_set.point(vi).iter().map(|c| c.f64()).collect(),
        }
    }

    /// Generator `b . p + 1/2 Tr(sigma sigma^T M)` for one control pair.
    pub fn generator(&self, q: &HamiltonianQuery<S>, ui: usize, vi: usize) -> Result<S> {
        let d = self.dim_state;
        let dn = self.dim_noise;
        let mut b = vec![S::zero(); d];
        let mut sig = vec![S::zero(); d * dn];
        self.eval(q.t, &q.x, ui, vi, &mut b, &mut sig)?;
        Ok(generator_value(d, dn, &b, &sig, &q.p, &q.m))
    }
}

/// `b . p + 1/2 sum_k sigma_k^T M sigma_k` with `sigma_k` the columns of sigma.
pub(crate) fn generator_value<S: Scalar>(
    d: usize,
    dn: usize,
    b: &[S],
    sig: &[S],
    p: &[S],
    m: &[S],
) -> S {
    let mut acc = S::zero();
    for i in 0..d {
        acc += b[i] * p[i];
    }
    let mut tr = S::zero();
    for k in 0..dn {
        for i in 0..d {
            let si = sig[i * dn + k];
            if si == S::zero() {
                continue;
            }
            for j in 0..d {
                tr += si * m[i * d + j] * sig[j * dn + k];
            }
        }
    }
    acc + tr * S::c(0.5)
}

/// Arguments `(t, x, p, M)` of a Hamiltonian evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianQuery<S: Scalar> {
    pub t: S,
    pub x: Vec<S>,
    pub p: Vec<S>,
    /// Row-major symmetric `d x d` matrix.
    pub m: Vec<S>,
}

impl<S: Scalar> HamiltonianQuery<S> {
    /// Builds a query, symmetrizing `m` as `(m + m^T) / 2`.
    pub fn new(t: S, x: Vec<S>, p: Vec<S>, m: Vec<S>) -> Result<Self> {
        let d = x.len();
        if d == 0 || p.len() != d || m.len() != d * d {
            return Err(GameError::InvalidArgument(format!(
                "query shapes x={}, p={}, M={} are inconsistent",
                x.len(),
                p.len(),
                m.len()
            )));
        }
        let mut sym = m.clone();
        for i in 0..d {
            for j in 0..d {
                sym[i * d + j] = (m[i * d + j] + m[j * d + i]) * S::c(0.5);
            }
        }
        Ok(Self { t, x, p, m: sym })
    }

    /// First-order query with `M = 0`.
    pub fn first_order(t: S, x: Vec<S>, p: Vec<S>) -> Result<Self> {
        let d = x.len();
        Self::new(t, x, p, vec![S::zero(); d * d])
    }
}

/// Value of a discrete minimax together with the achieving control indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Minimax<S: Scalar> {
    pub value: S,
    pub u_index: usize,
    pub v_index: usize,
}

/// Exact minimax over a row-major `nu x nv` table (`table[i * nv + j]` is the
/// entry for `u_i`, `v_j`).
///
/// Upper: `min_j max_i`; lower: `max_i min_j`. The returned pair is the outer
/// optimizer and the inner optimizer's response at it, lowest index on ties.
pub fn minimax<S: Scalar>(table: &[S], nu: usize, nv: usize, side: Side) -> Minimax<S> {
    debug_assert_eq!(table.len(), nu * nv);
    match side {
        Side::Upper => {
            let mut best = Minimax {
                value: S::infinity(),
                u_index: 0,
                v_index: 0,
            };
            for j in 0..nv {
                let mut inner = table[j];
                let mut arg = 0;
                for i in 1..nu {
                    let e = table[i * nv + j];
                    if e > inner {
                        inner = e;
                        arg = i;
                    }
                }
                if j == 0 || inner < best.value {
                    best = Minimax {
                        value: inner,
                        u_index: arg,
                        v_index: j,
                    };
                }
            }
            best
        }
        Side::Lower => {
            let mut best = Minimax {
                value: S::neg_infinity(),
                u_index: 0,
                v_index: 0,
            };
            for i in 0..nu {
                let row = &table[i * nv..(i + 1) * nv];
                let mut inner = row[0];
                let mut arg = 0;
                for (j, &e) in row.iter().enumerate().skip(1) {
                    if e < inner {
                        inner = e;
                        arg = j;
                    }
                }
                if i == 0 || inner > best.value {
                    best = Minimax {
                        value: inner,
                        u_index: i,
                        v_index: arg,
                    };
                }
            }
            best
        }
    }
}

/// Evaluates `H^+` (upper) or `H^-` (lower) at `q` by exhaustive minimax.
pub fn hamiltonian<S: Scalar>(
    problem: &GameProblem<S>,
    side: Side,
    q: &HamiltonianQuery<S>,
) -> Result<Minimax<S>> {
    if q.x.len() != problem.dim_state() {
        return Err(GameError::InvalidArgument(format!(
            "query dimension {} != state dimension {}",
            q.x.len(),
            problem.dim_state()
        )));
    }
    let nu = problem.u_set().len();
    let nv = problem.v_set().len();
    let mut table = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            table.push(problem.generator(q, i, j)?);
        }
    }
    Ok(minimax(&table, nu, nv, side))
}

/// Sampling parameters for [`audit_coefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    pub radius: f64,
    pub n_samples: usize,
    pub rng_seed: u64,
}

/// Empirical Lipschitz and growth ratios over a sample of the ball `|x| <= R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub radius: f64,
    pub n_samples: usize,
    pub n_pairs: usize,
    /// `sup |b(t,x,.)-b(t,y,.)| / |x-y|` over sampled pairs and all controls.
    pub lipschitz_drift: f64,
    /// Same for sigma in Frobenius norm.
    pub lipschitz_diffusion: f64,
    /// `sup (|b| + |sigma|) / (1 + |x|)`.
    pub growth_ratio: f64,
    /// Sample points (t, x) where some control pair produced a non-finite value.
    pub non_finite: Vec<(f64, Vec<f64>)>,
    /// Largest sampled payoff outside the declared bounds, if any.
    pub payoff_violations: usize,
}

/// Sample-based audit of the local Lipschitz and linear-growth conditions.
///
/// Blow-ups are reported in the result rather than returned as errors.
pub fn audit_coefficients<S: Scalar>(
    problem: &GameProblem<S>,
    spec: &AuditSpec,
) -> Result<AuditReport> {
    if !(spec.radius > 0.0) {
        return Err(GameError::InvalidArgument(
            "audit radius must be positive".into(),
        ));
    }
    if spec.n_samples < 2 {
        return Err(GameError::InvalidArgument(
            "audit needs at least two samples".into(),
        ));
    }
    let d = problem.dim_state();
    let dn = problem.dim_noise();
    let nu = problem.u_set().len();
    let nv = problem.v_set().len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let horizon = problem.horizon().f64();

    let samples: Vec<(S, Vec<S>)> = (0..spec.n_samples)
        .map(|_| {
            let t = S::c(rng.random::<f64>() * horizon);
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let len = dir
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let r = spec.radius * rng.random::<f64>().powf(1.0 / d as f64);
            (t, dir.iter().map(|c| S::c(c / len * r)).collect())
        })
        .collect();

    // Coefficients per sample per control pair; `None` if non-finite.
    let coeffs = |t: S, x: &[S]| -> Vec<Option<(Vec<S>, Vec<S>)>> {
        let mut out = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let mut b = vec![S::zero(); d];
                let mut s = vec![S::zero(); d * dn];
                out.push(
                    problem
                        .eval(t, x, i, j, &mut b, &mut s)
                        .ok()
                        .map(|_| (b, s)),
                );
            }
        }
        out
    };

    let mut report = AuditReport {
        radius: spec.radius,
        n_samples: spec.n_samples,
        n_pairs: 0,
        lipschitz_drift: 0.0,
        lipschitz_diffusion: 0.0,
        growth_ratio: 0.0,
        non_finite: Vec::new(),
        payoff_violations: 0,
    };
    let (g_lo, g_hi) = problem.payoff_bounds();
    let at_self: Vec<_> = samples.iter().map(|(t, x)| coeffs(*t, x)).collect();
    for ((t, x), cs) in samples.iter().zip(&at_self) {
        let g = problem.payoff(x);
        if !(g >= g_lo && g <= g_hi) {
            report.payoff_violations += 1;
        }
        if cs.iter().any(Option::is_none) {
            report
                .non_finite
                .push((t.f64(), x.iter().map(|c| c.f64()).collect()));
        }
        let scale = S::one() + norm(x);
        for (b, s) in cs.iter().flatten() {
            let r = ((norm(b) + norm(s)) / scale).f64();
            report.growth_ratio = report.growth_ratio.max(r);
        }
    }
    for a in 0..samples.len() {
        for b in (a + 1)..samples.len() {
            let (t, xa) = &samples[a];
            let xb = &samples[b].1;
            let gap = dist(xa, xb);
            if gap == S::zero() {
                continue;
            }
            // Evaluate the partner at the first sample's time.
            let cb = coeffs(*t, xb);
            report.n_pairs += 1;
            for (ca, cb) in at_self[a].iter().zip(&cb) {
                if let (Some((ba, sa)), Some((bb, sb))) = (ca, cb) {
                    let ld = (dist(ba, bb) / gap).f64();
                    let ls = (dist(sa, sb) / gap).f64();
                    report.lipschitz_drift = report.lipschitz_drift.max(ld);
                    report.lipschitz_diffusion = report.lipschitz_diffusion.max(ls);
                }
            }
        }
    }
    Ok(report)
}
