use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::scalar::Scalar;

/// Discrete-time state trajectory on `[s, T]`, optionally with the Brownian
/// increments that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SamplePath<S: Scalar> {
    dim: usize,
    times: Vec<S>,
    /// Row-major `(N + 1) x d`.
    states: Vec<S>,
    noise_dim: usize,
    /// Row-major `N x d'`; empty when not recorded.
    noise: Vec<S>,
}

impl<S: Scalar> SamplePath<S> {
    pub fn new(dim: usize, times: Vec<S>, states: Vec<S>) -> Result<Self> {
        Self::with_noise(dim, times, states, 0, Vec::new())
    }

    pub fn with_noise(
        dim: usize,
        times: Vec<S>,
        states: Vec<S>,
        noise_dim: usize,
        noise: Vec<S>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(GameError::InvalidPath(
                "state dimension must be positive".into(),
            ));
        }
        if times.is_empty() {
            return Err(GameError::InvalidPath("no time points".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GameError::InvalidPath(
                "times must be strictly increasing".into(),
            ));
        }
        if states.len() != times.len() * dim {
            return Err(GameError::InvalidPath(format!(
                "{} state entries for {} times of dimension {dim}",
                states.len(),
                times.len()
            )));
        }
        if !noise.is_empty() && noise.len() != (times.len() - 1) * noise_dim {
            return Err(GameError::InvalidPath(format!(
                "{} noise entries for {} steps of dimension {noise_dim}",
                noise.len(),
                times.len() - 1
            )));
        }
        Ok(Self {
            dim,
            times,
            states,
            noise_dim,
            noise,
        })
    }

    /// Uniform time grid `s = t_0 < ... < t_N = T`.
    pub fn uniform_times(s: S, horizon: S, n_steps: usize) -> Vec<S> {
        let h = (horizon - s) / S::c(n_steps as f64);
        (0..=n_steps)
            .map(|i| {
                if i == n_steps {
                    horizon
                } else {
                    s + h * S::c(i as f64)
                }
            })
            .collect()
    }

    /// Path with states given by a function of time, on a uniform grid.
    pub fn from_fn(
        s: S,
        horizon: S,
        n_steps: usize,
        dim: usize,
        f: impl Fn(S) -> Vec<S>,
    ) -> Result<Self> {
        let times = Self::uniform_times(s, horizon, n_steps);
        let states = times.iter().flat_map(|&t| f(t)).collect();
        Self::new(dim, times, states)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start_time(&self) -> S {
        self.times[0]
    }

    pub fn horizon(&self) -> S {
        self.times[self.times.len() - 1]
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn time(&self, i: usize) -> S {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[S] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal_state(&self) -> &[S] {
        self.state(self.len() - 1)
    }

    pub fn noise(&self) -> Option<&[S]> {
        (!self.noise.is_empty()).then_some(self.noise.as_slice())
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// View of the path up to and including index `last`.
    pub fn prefix(&self, last: usize) -> PathPrefix<'_, S> {
        PathPrefix::new(
            &self.times[..=last],
            &self.states[..(last + 1) * self.dim],
            self.dim,
            self.horizon(),
        )
    }

    pub fn full(&self) -> PathPrefix<'_, S> {
        self.prefix(self.len() - 1)
    }

    /// Largest index whose time is strictly below `t`, if any.
    pub fn index_before(&self, t: S) -> Option<usize> {
        let tol = S::snap_tol(t);
        let n = self.times.partition_point(|&ti| ti < t - tol);
        n.checked_sub(1)
    }
}

/// Read-only view of a path restricted to `[s, t_j]`.
///
/// This is the only thing stopping rules and selectors ever see: it carries
/// times and states up to its last index and the (deterministic) horizon,
/// never future states or the driving noise.
#[derive(Debug, Clone, Copy)]
pub struct PathPrefix<'a, S: Scalar> {
    times: &'a [S],
    states: &'a [S],
    dim: usize,
    horizon: S,
}

impl<'a, S: Scalar> PathPrefix<'a, S> {
    pub fn new(times: &'a [S], states: &'a [S], dim: usize, horizon: S) -> Self {
        debug_assert_eq!(times.len() * dim, states.len());
        Self {
            times,
            states,
            dim,
            horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start_time(&self) -> S {
        self.times[0]
    }

    pub fn end_time(&self) -> S {
        self.times[self.times.len() - 1]
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn reaches_horizon(&self) -> bool {
        self.end_time() >= self.horizon - S::snap_tol(self.horizon)
    }

    pub fn times(&self) -> &'a [S] {
        self.times
    }

    pub fn time(&self, i: usize) -> S {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &'a [S] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &'a [S] {
        self.state(self.last_index())
    }

    /// The sub-prefix ending at index `last`.
    pub fn truncate(&self, last: usize) -> PathPrefix<'a, S> {
        PathPrefix {
            times: &self.times[..=last],
            states: &self.states[..(last + 1) * self.dim],
            dim: self.dim,
            horizon: self.horizon,
        }
    }

    /// First index whose time is `>= t` (up to snapping tolerance).
    pub fn first_index_at_or_after(&self, t: S) -> Option<usize> {
        let tol = S::snap_tol(t);
        let i = self.times.partition_point(|&ti| ti < t - tol);
        (i < self.times.len()).then_some(i)
    }
}
