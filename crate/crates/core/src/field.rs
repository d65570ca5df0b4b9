//! Space-time lattices, grid functions on them, and smooth test functions.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::scalar::Scalar;

/// One spatial axis `[lo, hi]` sampled at `nodes` equally spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Axis<S: Scalar> {
    pub lo: S,
    pub hi: S,
    pub nodes: usize,
}

impl<S: Scalar> Axis<S> {
    pub fn new(lo: S, hi: S, nodes: usize) -> Self {
        Self { lo, hi, nodes }
    }

    pub fn spacing(&self) -> S {
        (self.hi - self.lo) / S::c((self.nodes - 1) as f64)
    }

    pub fn coord(&self, i: usize) -> S {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + self.spacing() * S::c(i as f64)
        }
    }

    /// Cell index and fractional offset of `x`, clamped into the axis.
    fn locate(&self, x: S) -> (usize, S) {
        let h = self.spacing();
        let pos = ((x - self.lo) / h).max(S::zero());
        let last = self.nodes - 1;
        let cell = pos.floor().to_usize().unwrap_or(last).min(last - 1);
        let frac = snap_unit(pos - S::c(cell as f64));
        (cell, frac)
    }

    fn nearest(&self, x: S) -> usize {
        let pos = ((x - self.lo) / self.spacing()).round().max(S::zero());
        pos.to_usize().unwrap_or(usize::MAX).min(self.nodes - 1)
    }
}

/// Clamps an interpolation weight into `[0, 1]`, snapping values within a
/// few ulps of either end so that evaluation at nodes is exact.
fn snap_unit<S: Scalar>(f: S) -> S {
    let tol = S::epsilon() * S::c(16.0);
    if f <= tol {
        S::zero()
    } else if f >= S::one() - tol {
        S::one()
    } else {
        f
    }
}

/// Tensor-product lattice over `[0, T] x prod_i [lo_i, hi_i]` with `n_t`
/// time steps (so `n_t + 1` time levels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SpaceTimeGrid<S: Scalar> {
    axes: Vec<Axis<S>>,
    n_t: usize,
    horizon: S,
}

impl<S: Scalar> SpaceTimeGrid<S> {
    /// Plain geometry without any stability check; see
    /// [`SpaceTimeGrid::for_problem`] for the CFL-validated constructor.
    pub fn new(axes: Vec<Axis<S>>, n_t: usize, horizon: S) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GameError::InvalidArgument(format!(
                "grid dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.nodes < 3 || !(a.hi > a.lo) {
                return Err(GameError::InvalidArgument(format!(
                    "axis {i} needs hi > lo and at least 3 nodes"
                )));
            }
        }
        if n_t == 0 || !(horizon > S::zero()) {
            return Err(GameError::InvalidArgument(
                "grid needs n_t >= 1 and a positive horizon".into(),
            ));
        }
        Ok(Self { axes, n_t, horizon })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<S>] {
        &self.axes
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_levels(&self) -> usize {
        self.n_t + 1
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn dt(&self) -> S {
        self.horizon / S::c(self.n_t as f64)
    }

    pub fn time(&self, level: usize) -> S {
        if level == self.n_t {
            self.horizon
        } else {
            self.dt() * S::c(level as f64)
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    /// Row-major multi-index of a flat node index (first axis slowest).
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].nodes;
            idx[k] = rem % n;
            rem /= n;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.nodes + i)
    }

    pub fn node_coords(&self, node: usize) -> Vec<S> {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    /// Stride of axis `k` in flat node indexing.
    pub fn stride(&self, k: usize) -> usize {
        self.axes[k + 1..].iter().map(|a| a.nodes).product()
    }

    pub fn nearest_level(&self, t: S) -> usize {
        let pos = (t / self.dt()).round().max(S::zero());
        pos.to_usize().unwrap_or(usize::MAX).min(self.n_t)
    }

    /// Nearest node, with out-of-box states clamped to the boundary.
    pub fn nearest_node(&self, x: &[S]) -> usize {
        let multi: Vec<usize> = self
            .axes
            .iter()
            .zip(x)
            .map(|(a, &c)| a.nearest(c))
            .collect();
        self.flat_index(&multi)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .any(|(&i, a)| i == 0 || i + 1 == a.nodes)
    }

    /// Whether `x` lies at least `margin` (fraction of each axis width) away
    /// from the spatial boundary.
    pub fn in_safe_interior(&self, x: &[S], margin: S) -> bool {
        x.len() == self.dim()
            && self.axes.iter().zip(x).all(|(a, &c)| {
                let m = (a.hi - a.lo) * margin;
                c >= a.lo + m && c <= a.hi - m
            })
    }
}

/// Real values on every (time level, node) of a [`SpaceTimeGrid`], evaluated
/// off-grid by multilinear interpolation with clamping to the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GridFunction<S: Scalar> {
    grid: SpaceTimeGrid<S>,
    values: Vec<S>,
}

impl<S: Scalar> GridFunction<S> {
    pub fn new(grid: SpaceTimeGrid<S>, values: Vec<S>) -> Result<Self> {
        let expected = grid.n_levels() * grid.n_nodes();
        if values.len() != expected {
            return Err(GameError::InvalidArgument(format!(
                "grid function has {} values, grid needs {expected}",
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpaceTimeGrid<S>, f: impl Fn(S, &[S]) -> S) -> Self {
        let mut values = Vec::with_capacity(grid.n_levels() * grid.n_nodes());
        for level in 0..grid.n_levels() {
            let t = grid.time(level);
            for node in 0..grid.n_nodes() {
                values.push(f(t, &grid.node_coords(node)));
            }
        }
        Self { grid, values }
    }

    pub fn constant(grid: SpaceTimeGrid<S>, c: S) -> Self {
        let n = grid.n_levels() * grid.n_nodes();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn level(&self, level: usize) -> &[S] {
        let n = self.grid.n_nodes();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn at(&self, level: usize, node: usize) -> S {
        self.values[level * self.grid.n_nodes() + node]
    }

    pub fn min_value(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max_value(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.grid != other.grid {
            return Err(GameError::InvalidArgument(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Multilinear interpolation in `(t, x)`; arguments outside the box are
    /// clamped to it.
    pub fn eval(&self, t: S, x: &[S]) -> S {
        let g = &self.grid;
        let dt = g.dt();
        let pos = (t / dt).max(S::zero());
        let l0 = pos.floor().to_usize().unwrap_or(g.n_t).min(g.n_t - 1);
        let ft = snap_unit(pos - S::c(l0 as f64));
        let cells: Vec<(usize, S)> = g.axes.iter().zip(x).map(|(a, &c)| a.locate(c)).collect();
        let d = g.dim();
        let base_node = cells
            .iter()
            .enumerate()
            .fold(0, |node, (k, &(cell, _))| node * g.axes[k].nodes + cell);
        let base = self.at(l0, base_node);
        let mut acc = S::zero();
        for corner in 0..(1usize << (d + 1)) {
            let mut w = if corner & 1 == 1 { ft } else { S::one() - ft };
            if w == S::zero() {
                continue;
            }
            let level = l0 + (corner & 1);
            let mut node = 0;
            for (k, &(cell, frac)) in cells.iter().enumerate() {
                let hi = (corner >> (k + 1)) & 1 == 1;
                w *= if hi { frac } else { S::one() - frac };
                node = node * g.axes[k].nodes + cell + usize::from(hi);
            }
            if w != S::zero() {
                acc += w * (self.at(level, node) - base);
            }
        }
        base + acc
    }
}

/// Smooth test function with analytic derivatives, used by the bump
/// constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum TestFunction<S: Scalar> {
    /// `c + a (t-t0) + b (t-t0)^2 + sum_i [p_i (x_i - x0_i) + q_i (x_i - x0_i)^2]`.
    Quadratic {
        t0: S,
        x0: Vec<S>,
        constant: S,
        t_lin: S,
        t_quad: S,
        x_lin: Vec<S>,
        x_quad: Vec<S>,
    },
    /// `c + a (t-t0) + amp * exp(-|x - x0|^2 / (2 width^2))`.
    Gaussian {
        t0: S,
        x0: Vec<S>,
        constant: S,
        t_lin: S,
        amplitude: S,
        width: S,
    },
}

impl<S: Scalar> TestFunction<S> {
    pub fn value(&self, t: S, x: &[S]) -> S {
        match self {
            TestFunction::Quadratic {
                t0,
                x0,
                constant,
                t_lin,
                t_quad,
                x_lin,
                x_quad,
            } => {
                let dt = t - *t0;
                let mut v = *constant + *t_lin * dt + *t_quad * dt * dt;
                for i in 0..x.len() {
                    let dx = x[i] - x0[i];
                    v += x_lin[i] * dx + x_quad[i] * dx * dx;
                }
                v
            }
            TestFunction::Gaussian {
                t0,
                x0,
                constant,
                t_lin,
                amplitude,
                width,
            } => {
                let r2: S = x.iter().zip(x0).map(|(&a, &b)| (a - b) * (a - b)).sum();
                *constant
                    + *t_lin * (t - *t0)
                    + *amplitude * (-r2 / (S::c(2.0) * *width * *width)).exp()
            }
        }
    }

    pub fn dt(&self, t: S, _x: &[S]) -> S {
        match self {
            TestFunction::Quadratic {
                t0, t_lin, t_quad, ..
            } => *t_lin + S::c(2.0) * *t_quad * (t - *t0),
            TestFunction::Gaussian { t_lin, .. } => *t_lin,
        }
    }

    pub fn grad(&self, _t: S, x: &[S]) -> Vec<S> {
        match self {
            TestFunction::Quadratic {
                x0, x_lin, x_quad, ..
            } => (0..x.len())
                .map(|i| x_lin[i] + S::c(2.0) * x_quad[i] * (x[i] - x0[i]))
                .collect(),
            TestFunction::Gaussian {
                x0,
                amplitude,
                width,
                ..
            } => {
                let w2 = *width * *width;
                let r2: S = x.iter().zip(x0).map(|(&a, &b)| (a - b) * (a - b)).sum();
                let e = *amplitude * (-r2 / (S::c(2.0) * w2)).exp();
                x.iter().zip(x0).map(|(&a, &b)| -e * (a - b) / w2).collect()
            }
        }
    }

    /// Row-major Hessian in `x`.
    pub fn hessian(&self, _t: S, x: &[S]) -> Vec<S> {
        let d = x.len();
        let mut h = vec![S::zero(); d * d];
        match self {
            TestFunction::Quadratic { x_quad, .. } => {
                for i in 0..d {
                    h[i * d + i] = S::c(2.0) * x_quad[i];
                }
            }
            TestFunction::Gaussian {
                x0,
                amplitude,
                width,
                ..
            } => {
                let w2 = *width * *width;
                let r2: S = x.iter().zip(x0).map(|(&a, &b)| (a - b) * (a - b)).sum();
                let e = *amplitude * (-r2 / (S::c(2.0) * w2)).exp();
                for i in 0..d {
                    for j in 0..d {
                        let di = x[i] - x0[i];
                        let dj = x[j] - x0[j];
                        let delta = if i == j { S::one() } else { S::zero() };
                        h[i * d + j] = e * (di * dj / (w2 * w2) - delta / w2);
                    }
                }
            }
        }
        h
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Quadratic { x0, .. } | TestFunction::Gaussian { x0, .. } => x0.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::new(vec![Axis::new(-1.0, 1.0, 21)], 10, 1.0).unwrap()
    }

    #[test]
    fn indexing_roundtrip_2d() {
        let g = SpaceTimeGrid::new(vec![Axis::new(0.0, 1.0, 4), Axis::new(0.0, 2.0, 5)], 3, 1.0)
            .unwrap();
        for node in 0..g.n_nodes() {
            assert_eq!(g.flat_index(&g.multi_index(node)), node);
        }
        assert_eq!(g.stride(0), 5);
        assert_eq!(g.node_coords(6), vec![1.0 / 3.0, 0.5]);
    }

    #[test]
    fn interpolation_reproduces_bilinear_functions() {
        let g = grid1();
        let f = GridFunction::from_fn(g, |t, x| 2.0 * t - 3.0 * x[0] + 1.0);
        for &(t, x) in &[(0.0, 0.0), (0.37, 0.123), (1.0, -1.0), (0.95, 0.999)] {
            let want = 2.0 * t - 3.0 * x + 1.0;
            assert!((f.eval(t, &[x]) - want).abs() < 1e-12);
        }
        // Clamped outside the box.
        assert!((f.eval(0.5, &[5.0]) - (1.0 - 3.0 + 1.0)).abs() < 1e-12);
        assert!((f.eval(-1.0, &[0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let g = grid1();
        let f = GridFunction::from_fn(g.clone(), |t, x| (t * 7.0 + x[0]).sin());
        for level in [0, 3, 10] {
            for node in [0, 7, 20] {
                assert_eq!(
                    f.eval(g.time(level), &g.node_coords(node)),
                    f.at(level, node)
                );
            }
        }
    }

    #[test]
    fn nearest_clamps() {
        let g = grid1();
        assert_eq!(g.nearest_node(&[-7.0]), 0);
        assert_eq!(g.nearest_node(&[7.0]), 20);
        assert_eq!(g.nearest_node(&[0.04]), 10);
        assert_eq!(g.nearest_level(0.26), 3);
        assert_eq!(g.nearest_level(3.0), 10);
    }

    #[test]
    fn test_function_derivatives_match_finite_differences() {
        let fns = [
            TestFunction::Quadratic {
                t0: 0.5,
                x0: vec![0.2, -0.1],
                constant: 1.0,
                t_lin: -2.0,
                t_quad: 0.7,
                x_lin: vec![0.3, -0.4],
                x_quad: vec![1.5, 0.25],
            },
            TestFunction::Gaussian {
                t0: 0.5,
                x0: vec![0.2, -0.1],
                constant: 0.1,
                t_lin: -1.0,
                amplitude: 2.0,
                width: 0.6,
            },
        ];
        let (t, x): (f64, [f64; 2]) = (0.3, [0.5, 0.4]);
        let h: f64 = 1e-5;
        for f in &fns {
            let ft = (f.value(t + h, &x) - f.value(t - h, &x)) / (2.0 * h);
            assert!((ft - f.dt(t, &x)).abs() < 1e-6);
            let g = f.grad(t, &x);
            let hess = f.hessian(t, &x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (f.value(t, &xp) - f.value(t, &xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6);
                let gp = f.grad(t, &xp);
                let gm = f.grad(t, &xm);
                for j in 0..2 {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                    assert!((fd2 - hess[j * 2 + i]).abs() < 1e-5);
                }
            }
        }
    }
}
