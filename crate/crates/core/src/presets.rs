//! Built-in benchmark games and the inline problem format.
//!
//! Every preset is one-dimensional with horizon `T = 1` and has an
//! independent closed-form or quadrature value to compare against.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Coefficients, ControlSet, GameProblem};
use crate::error::{GameError, Result};
use crate::scalar::Scalar;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 6] = [
    "null",
    "hopf_lax_asym",
    "non_isaacs",
    "heat",
    "cancel",
    "controlled_vol",
];

/// Cut-off beyond which the `controlled_vol` payoff is held constant.
pub const CONTROLLED_VOL_CAP: f64 = 10.0;

/// One-line description of each preset, in [`PRESET_NAMES`] order.
pub fn describe() -> Vec<(&'static str, &'static str)> {
    vec![
        ("null", "b = 0, sigma = 0, g = exp(-x^2); value equals g"),
        (
            "hopf_lax_asym",
            "b = u + v, U = [-1, 1] (21 points), V = [-1/2, 1/2] (11 points), sigma = 0, g = exp(-x^2); \
             upper value is the max of g over |y - x| <= (T - t)/2",
        ),
        (
            "non_isaacs",
            "b = u v, U = V = {-1, 1}, sigma = 0, g = tanh; upper value tanh(x + T - t), lower tanh(x - (T - t))",
        ),
        ("heat", "b = 0, sigma = sqrt(2), singleton controls, g = exp(-x^2); value is the heat-kernel average"),
        ("cancel", "b = u + v, U = V = [-1, 1] (21 points), sigma = 0, g = exp(-x^2); value equals g"),
        (
            "controlled_vol",
            "b = 0, sigma = u in {0.5, 1.5}, singleton V, g = sqrt(1 + min(x^2, 100)); \
             value is the sigma = 1.5 heat average",
        ),
    ]
}

/// Looks a preset up by name.
pub fn preset<S: Scalar>(name: &str) -> Result<GameProblem<S>> {
    match name {
        "null" => null(),
        "hopf_lax_asym" => hopf_lax_asym(),
        "non_isaacs" => non_isaacs(),
        "heat" => heat(),
        "cancel" => cancel(),
        "controlled_vol" => controlled_vol(),
        other => Err(GameError::InvalidProblem(format!(
            "unknown preset `{other}`; known presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn gaussian<S: Scalar>(x: &[S]) -> S {
    (-x[0] * x[0]).exp()
}

fn scalar_game<S: Scalar>(
    name: &str,
    coefficients: impl Coefficients<S> + 'static,
    u: ControlSet<S>,
    v: ControlSet<S>,
    bounds: (f64, f64),
) -> Result<GameProblem<S>> {
    GameProblem::new(
        name,
        1,
        1,
        Arc::new(coefficients),
        u,
        v,
        S::one(),
        (S::c(bounds.0), S::c(bounds.1)),
    )
}

/// Drift `b(u, v)` and constant-in-state diffusion `sigma(u)` on the line.
struct ScalarGame<S: Scalar> {
    drift: fn(S, S) -> S,
    diffusion: fn(S) -> S,
    payoff: fn(&[S]) -> S,
}

impl<S: Scalar> Coefficients<S> for ScalarGame<S> {
    fn drift(&self, _t: S, _x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        out[0] = (self.drift)(u[0], v[0]);
    }

    fn diffusion(&self, _t: S, _x: &[S], u: &[S], _v: &[S], out: &mut [S]) {
        out[0] = (self.diffusion)(u[0]);
    }

    fn payoff(&self, x: &[S]) -> S {
        (self.payoff)(x)
    }
}

fn zero_control<S: Scalar>(label: &str) -> Result<ControlSet<S>> {
    ControlSet::singleton(label, vec![S::zero()])
}

pub fn null<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |_, _| S::zero(),
        diffusion: |_| S::zero(),
        payoff: gaussian,
    };
    scalar_game(
        "null",
        c,
        zero_control("U0")?,
        zero_control("V0")?,
        (0.0, 1.0),
    )
}

pub fn hopf_lax_asym<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |u, v| u + v,
        diffusion: |_| S::zero(),
        payoff: gaussian,
    };
    scalar_game(
        "hopf_lax_asym",
        c,
        ControlSet::linspace("U", -S::one(), S::one(), 21)?,
        ControlSet::linspace("V", S::c(-0.5), S::c(0.5), 11)?,
        (0.0, 1.0),
    )
}

pub fn non_isaacs<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |u, v| u * v,
        diffusion: |_| S::zero(),
        payoff: |x: &[S]| x[0].tanh(),
    };
    let pm = || ControlSet::new("pm", vec![vec![-S::one()], vec![S::one()]]);
    scalar_game("non_isaacs", c, pm()?, pm()?, (-1.0, 1.0))
}

pub fn heat<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |_, _| S::zero(),
        diffusion: |_| S::c(2.0).sqrt(),
        payoff: gaussian,
    };
    scalar_game(
        "heat",
        c,
        zero_control("U0")?,
        zero_control("V0")?,
        (0.0, 1.0),
    )
}

pub fn cancel<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |u, v| u + v,
        diffusion: |_| S::zero(),
        payoff: gaussian,
    };
    let set = || ControlSet::linspace("sym", -S::one(), S::one(), 21);
    scalar_game("cancel", c, set()?, set()?, (0.0, 1.0))
}

/// The `controlled_vol` payoff, convex on `[-10, 10]` and constant outside.
pub fn controlled_vol_payoff<S: Scalar>(x: &[S]) -> S {
    let cap = S::c(CONTROLLED_VOL_CAP);
    let y = x[0].max(-cap).min(cap);
    (S::one() + y * y).sqrt()
}

pub fn controlled_vol<S: Scalar>() -> Result<GameProblem<S>> {
    let c = ScalarGame {
        drift: |_, _| S::zero(),
        diffusion: |u| u,
        payoff: controlled_vol_payoff,
    };
    let hi = (1.0 + CONTROLLED_VOL_CAP * CONTROLLED_VOL_CAP).sqrt();
    scalar_game(
        "controlled_vol",
        c,
        ControlSet::new("vol", vec![vec![S::c(0.5)], vec![S::c(1.5)]])?,
        zero_control("V0")?,
        (1.0, hi),
    )
}

/// `coef * t^t_pow * prod_i x_i^x_pows[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub t_pow: u32,
    #[serde(default)]
    pub x_pows: Vec<u32>,
}

/// A polynomial in `(t, x)` of total degree at most [`Polynomial::MAX_DEGREE`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub const MAX_DEGREE: u32 = 3;

    pub fn constant(c: f64) -> Self {
        Polynomial(vec![Monomial {
            coef: c,
            t_pow: 0,
            x_pows: Vec::new(),
        }])
    }

    /// Checks exponents against the state dimension and the degree cap.
    pub fn validate(&self, d: usize, what: &str) -> Result<()> {
        for m in &self.0 {
            if m.x_pows.len() > d {
                return Err(GameError::InvalidProblem(format!(
                    "{what}: monomial has {} state exponents for dimension {d}",
                    m.x_pows.len()
                )));
            }
            let deg = m.t_pow + m.x_pows.iter().sum::<u32>();
            if deg > Self::MAX_DEGREE {
                return Err(GameError::InvalidProblem(format!(
                    "{what}: monomial degree {deg} exceeds {}",
                    Self::MAX_DEGREE
                )));
            }
            if !m.coef.is_finite() {
                return Err(GameError::InvalidProblem(format!(
                    "{what}: non-finite coefficient"
                )));
            }
        }
        Ok(())
    }

    pub fn eval<S: Scalar>(&self, t: S, x: &[S]) -> S {
        self.0
            .iter()
            .map(|m| {
                let mut v = S::c(m.coef) * t.powi(m.t_pow as i32);
                for (xi, &p) in x.iter().zip(&m.x_pows) {
                    v *= xi.powi(p as i32);
                }
                v
            })
            .sum()
    }
}

/// `f(t, x, u, v) = base(t, x) + B_u(t, x) u + B_v(t, x) v`, with `base` of
/// length `rows`, and `B_u`, `B_v` row-major `rows x dim(U)` and
/// `rows x dim(V)`. Missing `B` tables mean zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub base: Vec<Polynomial>,
    #[serde(default)]
    pub u_coef: Vec<Polynomial>,
    #[serde(default)]
    pub v_coef: Vec<Polynomial>,
}

impl AffineField {
    fn validate(&self, rows: usize, d: usize, du: usize, dv: usize, what: &str) -> Result<()> {
        if self.base.len() != rows {
            return Err(GameError::InvalidProblem(format!(
                "{what}.base needs {rows} entries, has {}",
                self.base.len()
            )));
        }
        for (name, table, cols) in [("u_coef", &self.u_coef, du), ("v_coef", &self.v_coef, dv)] {
            if !table.is_empty() && table.len() != rows * cols {
                return Err(GameError::InvalidProblem(format!(
                    "{what}.{name} needs {} entries, has {}",
                    rows * cols,
                    table.len()
                )));
            }
        }
        for p in self.base.iter().chain(&self.u_coef).chain(&self.v_coef) {
            p.validate(d, what)?;
        }
        Ok(())
    }

    fn eval<S: Scalar>(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = self.base[r].eval(t, x);
            if !self.u_coef.is_empty() {
                for (k, &uk) in u.iter().enumerate() {
                    acc += self.u_coef[r * u.len() + k].eval(t, x) * uk;
                }
            }
            if !self.v_coef.is_empty() {
                for (k, &vk) in v.iter().enumerate() {
                    acc += self.v_coef[r * v.len() + k].eval(t, x) * vk;
                }
            }
            *o = acc;
        }
    }
}

/// Bounded terminal payoffs available to inline problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `offset + amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + amplitude * tanh(x[axis] / scale)`.
    Tanh {
        axis: usize,
        scale: f64,
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    /// A polynomial in `x` at `t = 0`, clamped to `[lo, hi]`.
    ClampedPolynomial { poly: Polynomial, lo: f64, hi: f64 },
}

impl PayoffSpec {
    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(GameError::InvalidProblem(format!("payoff: {m}")));
        match self {
            PayoffSpec::Gaussian { center, width, .. } => {
                if center.len() != d {
                    return bad("center dimension differs from state dimension");
                }
                if !(*width > 0.0) {
                    return bad("width must be positive");
                }
            }
            PayoffSpec::Tanh { axis, scale, .. } => {
                if *axis >= d {
                    return bad("axis outside state dimension");
                }
                if !(*scale > 0.0) {
                    return bad("scale must be positive");
                }
            }
            PayoffSpec::ClampedPolynomial { poly, lo, hi } => {
                if !(lo <= hi) {
                    return bad("empty clamp interval");
                }
                poly.validate(d, "payoff")?;
            }
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            PayoffSpec::Gaussian {
                amplitude, offset, ..
            }
            | PayoffSpec::Tanh {
                amplitude, offset, ..
            } => {
                let lo = if matches!(self, PayoffSpec::Tanh { .. }) {
                    -amplitude.abs()
                } else {
                    amplitude.min(0.0)
                };
                let hi = if matches!(self, PayoffSpec::Tanh { .. }) {
                    amplitude.abs()
                } else {
                    amplitude.max(0.0)
                };
                (offset + lo, offset + hi)
            }
            PayoffSpec::ClampedPolynomial { lo, hi, .. } => (*lo, *hi),
        }
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            PayoffSpec::Gaussian {
                center,
                width,
                amplitude,
                offset,
            } => {
                let r2: S = x
                    .iter()
                    .zip(center)
                    .map(|(&a, &c)| (a - S::c(c)).powi(2))
                    .sum();
                S::c(*offset) + S::c(*amplitude) * (-r2 / S::c(width * width)).exp()
            }
            PayoffSpec::Tanh {
                axis,
                scale,
                amplitude,
                offset,
            } => S::c(*offset) + S::c(*amplitude) * (x[*axis] / S::c(*scale)).tanh(),
            PayoffSpec::ClampedPolynomial { poly, lo, hi } => {
                poly.eval(S::zero(), x).max(S::c(*lo)).min(S::c(*hi))
            }
        }
    }
}

/// A game given entirely by data: affine-in-control polynomial coefficients,
/// finite control sets and a bounded payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineProblem {
    pub name: String,
    pub dim_state: usize,
    pub dim_noise: usize,
    pub horizon: f64,
    pub u_points: Vec<Vec<f64>>,
    pub v_points: Vec<Vec<f64>>,
    pub drift: AffineField,
    /// Row-major `dim_state x dim_noise` entries.
    pub diffusion: AffineField,
    pub payoff: PayoffSpec,
}

struct InlineCoefficients {
    drift: AffineField,
    diffusion: AffineField,
    payoff: PayoffSpec,
}

impl<S: Scalar> Coefficients<S> for InlineCoefficients {
    fn drift(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        self.drift.eval(t, x, u, v, out)
    }

    fn diffusion(&self, t: S, x: &[S], u: &[S], v: &[S], out: &mut [S]) {
        self.diffusion.eval(t, x, u, v, out)
    }

    fn payoff(&self, x: &[S]) -> S {
        self.payoff.eval(x)
    }
}

impl InlineProblem {
    pub fn validate(&self) -> Result<()> {
        let (d, dn) = (self.dim_state, self.dim_noise);
        let dim_of = |pts: &[Vec<f64>]| pts.first().map_or(0, |p| p.len());
        let (du, dv) = (dim_of(&self.u_points), dim_of(&self.v_points));
        self.drift.validate(d, d, du, dv, "drift")?;
        self.diffusion.validate(d * dn, d, du, dv, "diffusion")?;
        self.payoff.validate(d)
    }

    pub fn build<S: Scalar>(&self) -> Result<GameProblem<S>> {
        self.validate()?;
        let conv = |pts: &[Vec<f64>]| -> Vec<Vec<S>> {
            pts.iter()
                .map(|p| p.iter().map(|&c| S::c(c)).collect())
                .collect()
        };
        let (lo, hi) = self.payoff.bounds();
        GameProblem::new(
            self.name.clone(),
            self.dim_state,
            self.dim_noise,
            Arc::new(InlineCoefficients {
                drift: self.drift.clone(),
                diffusion: self.diffusion.clone(),
                payoff: self.payoff.clone(),
            }),
            ControlSet::new("U", conv(&self.u_points))?,
            ControlSet::new("V", conv(&self.v_points))?,
            S::c(self.horizon),
            (S::c(lo), S::c(hi)),
        )
    }
}
