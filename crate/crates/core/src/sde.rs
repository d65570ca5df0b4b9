//! Strong Euler-Maruyama simulation of the controlled state equation under a
//! pair of elementary strategies.
//!
//! Brownian increments for path `i` come from a ChaCha stream keyed by
//! `(rng_seed, i)` and drawn in step order, so a path is a pure function of
//! its seed and index no matter how paths are scheduled across threads. The
//! same index gives the same noise for every strategy pair.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{GameProblem, Player};
use crate::error::{GameError, Result};
use crate::pathspace::{ElementaryStrategy, PathPrefix, SamplePath};
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

fn default_guard() -> f64 {
    1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_steps: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    pub batch_size: usize,
    #[serde(default = "default_guard")]
    pub overflow_guard: f64,
    #[serde(default)]
    pub record_noise: bool,
}

impl SimulationConfig {
    pub fn new(n_steps: usize, rng_seed: u64, batch_size: usize) -> Self {
        Self {
            n_steps,
            rng_seed,
            scheme: Scheme::EulerMaruyama,
            batch_size,
            overflow_guard: default_guard(),
            record_noise: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(GameError::InvalidArgument(
                "n_steps must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(GameError::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.overflow_guard > 0.0) {
            return Err(GameError::InvalidArgument(
                "overflow guard must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Strategies of player one and player two, both started at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPair<S: Scalar> {
    pub u: ElementaryStrategy<S>,
    pub v: ElementaryStrategy<S>,
}

impl<S: Scalar> StrategyPair<S> {
    pub fn new(u: ElementaryStrategy<S>, v: ElementaryStrategy<S>) -> Result<Self> {
        if u.player() != Player::One || v.player() != Player::Two {
            return Err(GameError::StrategyMismatch(format!(
                "pair needs (player one, player two), got ({:?}, {:?})",
                u.player(),
                v.player()
            )));
        }
        Ok(Self { u, v })
    }

    fn check_problem(&self, problem: &GameProblem<S>) -> Result<()> {
        if **self.u.controls() != **problem.u_set() || **self.v.controls() != **problem.v_set() {
            return Err(GameError::StrategyMismatch(
                "strategy control sets differ from the problem's".into(),
            ));
        }
        Ok(())
    }
}

/// A simulated path with the control indices held on each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<S: Scalar> {
    pub path: SamplePath<S>,
    pub u_actions: Vec<usize>,
    pub v_actions: Vec<usize>,
}

impl<S: Scalar> Trajectory<S> {
    /// CSV with columns `t, x_1..x_d, u_action, v_action`; the action
    /// columns of the terminal row are empty.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.path.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.push("u_action".into());
        header.push("v_action".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.path.len() {
            let mut row = vec![fmt_num(self.path.time(i).f64())];
            row.extend(self.path.state(i).iter().map(|c| fmt_num(c.f64())));
            match (self.u_actions.get(i), self.v_actions.get(i)) {
                (Some(a), Some(b)) => {
                    row.push(a.to_string());
                    row.push(b.to_string());
                }
                _ => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Locale-free decimal with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Mean, standard deviation and standard error of a sample, accumulated in
/// index order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std_dev: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                n,
                mean,
                std_dev: 0.0,
                std_error: 0.0,
            };
        }
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std_dev = (ss / (n - 1) as f64).sqrt();
        Self {
            n,
            mean,
            std_dev,
            std_error: std_dev / (n as f64).sqrt(),
        }
    }
}

/// Payoff statistics over a batch, plus the indices of failed paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_paths: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub failures: Vec<PathFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path_index: usize,
    pub error: String,
}

impl BatchSummary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| GameError::Serialization(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult<S: Scalar> {
    /// Successful trajectories in path-index order.
    pub trajectories: Vec<Trajectory<S>>,
    pub summary: BatchSummary,
}

fn check_start<S: Scalar>(problem: &GameProblem<S>, s: S, x: &[S]) -> Result<()> {
    if !(s < problem.horizon()) || s < S::zero() {
        return Err(GameError::InvalidArgument(format!(
            "start time {s} must lie in [0, {})",
            problem.horizon()
        )));
    }
    if x.len() != problem.dim_state() || x.iter().any(|c| !c.is_finite()) {
        return Err(GameError::InvalidArgument(format!(
            "initial state must be {} finite numbers",
            problem.dim_state()
        )));
    }
    Ok(())
}

/// Simulates path number `path_index` of the stream keyed by `cfg.rng_seed`.
pub fn simulate_path<S: Scalar>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    path_index: u64,
) -> Result<Trajectory<S>> {
    cfg.validate()?;
    check_start(problem, s, x)?;
    pair.check_problem(problem)?;
    let d = problem.dim_state();
    let dn = problem.dim_noise();
    let n = cfg.n_steps;
    let horizon = problem.horizon();
    let times = SamplePath::uniform_times(s, horizon, n);
    let h = (horizon - s) / S::c(n as f64);
    let sqrt_h = h.sqrt().f64();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(path_index);

    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x);
    let mut noise = if cfg.record_noise {
        Vec::with_capacity(n * dn)
    } else {
        Vec::new()
    };
    let mut u_actions = Vec::with_capacity(n);
    let mut v_actions = Vec::with_capacity(n);
    let mut ucur = pair.u.cursor();
    let mut vcur = pair.v.cursor();
    let mut b = vec![S::zero(); d];
    let mut sig = vec![S::zero(); d * dn];
    let mut dw = vec![S::zero(); dn];
    let mut next = vec![S::zero(); d];

    for j in 0..n {
        for z in dw.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *z = S::c(e * sqrt_h);
        }
        if cfg.record_noise {
            noise.extend_from_slice(&dw);
        }
        let prefix = PathPrefix::new(&times[..=j], &states[..(j + 1) * d], d, horizon);
        let ui = ucur.action(&prefix)?;
        let vi = vcur.action(&prefix)?;
        u_actions.push(ui);
        v_actions.push(vi);

        let xj = &states[j * d..(j + 1) * d];
        problem.eval(times[j], xj, ui, vi, &mut b, &mut sig)?;
        for i in 0..d {
            let mut acc = xj[i] + b[i] * h;
            for k in 0..dn {
                acc += sig[i * dn + k] * dw[k];
            }
            next[i] = acc;
        }
        let r = norm(&next).f64();
        if !(r <= cfg.overflow_guard) {
            return Err(GameError::Explosion {
                step: j + 1,
                t: times[j + 1].f64(),
                norm: r,
                guard: cfg.overflow_guard,
            });
        }
        states.extend_from_slice(&next);
    }
    let path = SamplePath::with_noise(d, times, states, dn, noise)?;
    Ok(Trajectory {
        path,
        u_actions,
        v_actions,
    })
}

/// Path 0 of the stream keyed by `cfg.rng_seed`.
pub fn simulate<S: Scalar>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
) -> Result<Trajectory<S>> {
    simulate_path(problem, pair, s, x, cfg, 0)
}

/// Applies `f` to each of the `cfg.batch_size` paths, in parallel; results
/// are returned in path-index order.
pub fn map_paths<S, T, F>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
    f: F,
) -> Result<Vec<Result<T>>>
where
    S: Scalar,
    T: Send,
    F: Fn(&Trajectory<S>) -> Result<T> + Sync,
{
    cfg.validate()?;
    check_start(problem, s, x)?;
    pair.check_problem(problem)?;
    Ok((0..cfg.batch_size as u64)
        .into_par_iter()
        .map(|i| simulate_path(problem, pair, s, x, cfg, i).and_then(|tr| f(&tr)))
        .collect())
}

/// Splits per-path results into values and a failure list.
pub(crate) fn split_results<T>(results: Vec<Result<T>>) -> (Vec<T>, Vec<PathFailure>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(PathFailure {
                path_index: i,
                error: e.to_string(),
            }),
        }
    }
    (ok, failures)
}

/// Simulates `cfg.batch_size` paths and summarizes `g(X_T)`.
pub fn simulate_batch<S: Scalar>(
    problem: &GameProblem<S>,
    pair: &StrategyPair<S>,
    s: S,
    x: &[S],
    cfg: &SimulationConfig,
) -> Result<BatchResult<S>> {
    let results = map_paths(problem, pair, s, x, cfg, |tr| Ok(tr.clone()))?;
    let n_paths = results.len();
    let (trajectories, failures) = split_results(results);
    let payoffs: Vec<f64> = trajectories
        .iter()
        .map(|tr| problem.payoff(tr.path.terminal_state()).f64())
        .collect();
    let st = SampleStats::from_values(&payoffs);
    Ok(BatchResult {
        trajectories,
        summary: BatchSummary {
            n_paths,
            n_failed: failures.len(),
            mean: st.mean,
            std_dev: st.std_dev,
            std_error: st.std_error,
            failures,
        },
    })
}
