//! Stopping rules: non-anticipative maps from paths to grid times.
//!
//! Every rule is evaluated through a [`RuleCursor`], which is fed growing
//! prefixes of one path and commits to a stopping index the first time the
//! rule triggers. A rule that has not triggered by the horizon stops at `T`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::PathEvent;
use super::path::{PathPrefix, SamplePath};
use crate::error::{GameError, Result};
use crate::scalar::{dist, Scalar};

type RuleFn<S> = dyn Fn(&PathPrefix<'_, S>) -> Option<S> + Send + Sync;

/// User-supplied stopping rule.
///
/// The closure sees a prefix and returns `Some(tau)` with `tau` a time of
/// that prefix once the rule has triggered, `None` otherwise. Once it has
/// returned `Some(tau)` it must keep returning the same `tau` on every
/// extension; the cursor checks this.
#[derive(Clone)]
pub struct CustomRule<S: Scalar> {
    pub label: String,
    f: Arc<RuleFn<S>>,
}

impl<S: Scalar> CustomRule<S> {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&PathPrefix<'_, S>) -> Option<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl<S: Scalar> fmt::Debug for CustomRule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomRule({})", self.label)
    }
}

impl<S: Scalar> PartialEq for CustomRule<S> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// A stopping rule on the discrete path space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "",
    tag = "type",
    content = "params",
    rename_all = "snake_case"
)]
pub enum StoppingRule<S: Scalar> {
    /// First grid time `>= time` (start of path if `time <= s`).
    Constant { time: S },
    /// Never triggers; stops at `T`.
    Terminal,
    /// First time in `times` strictly after `after(y)`, snapped up to the
    /// path grid; `T` if none.
    DeterministicGrid {
        times: Vec<S>,
        after: Box<StoppingRule<S>>,
    },
    /// First grid time `t >= after(y)` with `|y(t) - center| >= radius`, or
    /// with `max(|t - t0|, |y(t) - center|) >= radius` when `time_center`
    /// is set (space-time ball).
    FirstExit {
        center: Vec<S>,
        radius: S,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_center: Option<S>,
        after: Box<StoppingRule<S>>,
    },
    /// Earliest of the children.
    Min(Vec<StoppingRule<S>>),
    /// Latest of the children.
    Max(Vec<StoppingRule<S>>),
    /// `max(event.at, first)` if the event holds at its time, else
    /// `max(event.at, second)`.
    Switch {
        event: Box<PathEvent<S>>,
        first: Box<StoppingRule<S>>,
        second: Box<StoppingRule<S>>,
    },
    #[serde(skip)]
    Custom(CustomRule<S>),
}

impl<S: Scalar> StoppingRule<S> {
    pub fn constant(time: S) -> Self {
        StoppingRule::Constant { time }
    }

    pub fn first_exit(center: Vec<S>, radius: S, after: StoppingRule<S>) -> Result<Self> {
        if !(radius > S::zero()) {
            return Err(GameError::InvalidArgument(format!(
                "exit radius must be positive, got {radius}"
            )));
        }
        Ok(StoppingRule::FirstExit {
            center,
            radius,
            time_center: None,
            after: Box::new(after),
        })
    }

    /// Exit from the space-time ball of radius `radius` around `(t0, center)`.
    pub fn first_exit_space_time(
        t0: S,
        center: Vec<S>,
        radius: S,
        after: StoppingRule<S>,
    ) -> Result<Self> {
        if !(radius > S::zero()) {
            return Err(GameError::InvalidArgument(format!(
                "exit radius must be positive, got {radius}"
            )));
        }
        Ok(StoppingRule::FirstExit {
            center,
            radius,
            time_center: Some(t0),
            after: Box::new(after),
        })
    }

    pub fn min(self, other: StoppingRule<S>) -> Self {
        match (self, other) {
            (StoppingRule::Terminal, r) | (r, StoppingRule::Terminal) => r,
            (a, b) => StoppingRule::Min(vec![a, b]),
        }
    }

    pub fn max(self, other: StoppingRule<S>) -> Self {
        match (self, other) {
            (StoppingRule::Terminal, _) | (_, StoppingRule::Terminal) => StoppingRule::Terminal,
            (a, b) if a == b => a,
            (a, b) => StoppingRule::Max(vec![a, b]),
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, StoppingRule::Terminal)
    }

    pub fn cursor(&self) -> RuleCursor<'_, S> {
        RuleCursor::new(self)
    }

    /// Stopping index on `prefix`, or `None` if the rule has not triggered
    /// within it (and the prefix does not reach `T`).
    pub fn index_on(&self, prefix: &PathPrefix<'_, S>) -> Result<Option<usize>> {
        self.cursor().advance(prefix)
    }

    /// Stopping time on `prefix`, as for [`StoppingRule::index_on`].
    pub fn time_on(&self, prefix: &PathPrefix<'_, S>) -> Result<Option<S>> {
        Ok(self.index_on(prefix)?.map(|i| prefix.time(i)))
    }

    /// Stopping index on a complete path (`T`'s index if never triggered).
    pub fn index_on_path(&self, path: &SamplePath<S>) -> Result<usize> {
        let full = path.full();
        Ok(self.index_on(&full)?.unwrap_or(full.last_index()))
    }

    pub fn time_on_path(&self, path: &SamplePath<S>) -> Result<S> {
        Ok(path.time(self.index_on_path(path)?))
    }

    pub fn label(&self) -> String {
        match self {
            StoppingRule::Constant { time } => format!("const({time})"),
            StoppingRule::Terminal => "T".into(),
            StoppingRule::DeterministicGrid { times, after } => {
                format!("grid({} times after {})", times.len(), after.label())
            }
            StoppingRule::FirstExit {
                radius,
                time_center,
                after,
                ..
            } => match time_center {
                Some(t0) => format!("exit_st(r={radius}, t0={t0}, after {})", after.label()),
                None => format!("exit(r={radius}, after {})", after.label()),
            },
            StoppingRule::Min(c) => {
                format!(
                    "min({})",
                    c.iter().map(|r| r.label()).collect::<Vec<_>>().join(", ")
                )
            }
            StoppingRule::Max(c) => {
                format!(
                    "max({})",
                    c.iter().map(|r| r.label()).collect::<Vec<_>>().join(", ")
                )
            }
            StoppingRule::Switch { first, second, .. } => {
                format!("switch({} | {})", first.label(), second.label())
            }
            StoppingRule::Custom(c) => c.label.clone(),
        }
    }
}

/// Incremental evaluator of one rule along one path.
///
/// `advance` must be called with prefixes of the same path of
/// non-decreasing length. The first `Some(i)` is final.
pub struct RuleCursor<'r, S: Scalar> {
    rule: &'r StoppingRule<S>,
    resolved: Option<usize>,
    state: CursorState<'r, S>,
}

enum CursorState<'r, S: Scalar> {
    Leaf,
    After {
        after: Box<RuleCursor<'r, S>>,
        from: Option<usize>,
        scanned: usize,
    },
    Children(Vec<RuleCursor<'r, S>>),
    Switch {
        at: Box<RuleCursor<'r, S>>,
        at_index: Option<usize>,
        branch: Option<Box<RuleCursor<'r, S>>>,
    },
}

impl<'r, S: Scalar> RuleCursor<'r, S> {
    pub fn new(rule: &'r StoppingRule<S>) -> Self {
        let state = match rule {
            StoppingRule::DeterministicGrid { after, .. }
            | StoppingRule::FirstExit { after, .. } => CursorState::After {
                after: Box::new(RuleCursor::new(after)),
                from: None,
                scanned: 0,
            },
            StoppingRule::Min(c) | StoppingRule::Max(c) => {
                CursorState::Children(c.iter().map(RuleCursor::new).collect())
            }
            StoppingRule::Switch { event, .. } => CursorState::Switch {
                at: Box::new(RuleCursor::new(&event.at)),
                at_index: None,
                branch: None,
            },
            _ => CursorState::Leaf,
        };
        Self {
            rule,
            resolved: None,
            state,
        }
    }

    pub fn resolved(&self) -> Option<usize> {
        self.resolved
    }

    pub fn advance(&mut self, prefix: &PathPrefix<'_, S>) -> Result<Option<usize>> {
        if let StoppingRule::Custom(c) = self.rule {
            return self.advance_custom(c, prefix);
        }
        if self.resolved.is_some() {
            return Ok(self.resolved);
        }
        let hit = self.evaluate(prefix)?;
        self.resolved = match hit {
            Some(i) => Some(i),
            None if prefix.reaches_horizon() => Some(prefix.last_index()),
            None => None,
        };
        Ok(self.resolved)
    }

    fn advance_custom(
        &mut self,
        c: &CustomRule<S>,
        prefix: &PathPrefix<'_, S>,
    ) -> Result<Option<usize>> {
        let now = match (c.f)(prefix) {
            Some(t) => Some(prefix.first_index_at_or_after(t).ok_or_else(|| {
                GameError::StrategyInvariant(format!(
                    "rule `{}` returned {t} beyond its prefix ending at {}",
                    c.label,
                    prefix.end_time()
                ))
            })?),
            None => None,
        };
        if let Some(committed) = self.resolved {
            if now != Some(committed) {
                return Err(GameError::RuleCommitment {
                    rule: c.label.clone(),
                    committed: prefix.time(committed).f64(),
                    now: now.map_or(f64::NAN, |i| prefix.time(i).f64()),
                });
            }
            return Ok(self.resolved);
        }
        self.resolved = match now {
            Some(i) => Some(i),
            None if prefix.reaches_horizon() => Some(prefix.last_index()),
            None => None,
        };
        Ok(self.resolved)
    }

    fn evaluate(&mut self, prefix: &PathPrefix<'_, S>) -> Result<Option<usize>> {
        let last = prefix.last_index();
        match (self.rule, &mut self.state) {
            (StoppingRule::Constant { time }, _) => {
                if *time <= prefix.start_time() {
                    return Ok(Some(0));
                }
                Ok(prefix.first_index_at_or_after(*time))
            }
            (StoppingRule::Terminal, _) => Ok(None),
            (StoppingRule::DeterministicGrid { times, .. }, CursorState::After { after, .. }) => {
                let Some(a) = after.advance(prefix)? else {
                    return Ok(None);
                };
                let ta = prefix.time(a);
                let tol = S::snap_tol(ta);
                match times
                    .iter()
                    .copied()
                    .filter(|&t| t > ta + tol)
                    .reduce(S::min)
                {
                    Some(next) => Ok(prefix.first_index_at_or_after(next)),
                    None => Ok(None),
                }
            }
            (
                StoppingRule::FirstExit {
                    center,
                    radius,
                    time_center,
                    ..
                },
                CursorState::After {
                    after,
                    from,
                    scanned,
                },
            ) => {
                if from.is_none() {
                    *from = after.advance(prefix)?;
                    if let Some(a) = *from {
                        *scanned = a;
                    }
                }
                if from.is_none() {
                    return Ok(None);
                }
                while *scanned <= last {
                    let i = *scanned;
                    let mut r = dist(prefix.state(i), center);
                    if let Some(t0) = time_center {
                        r = r.max((prefix.time(i) - *t0).abs());
                    }
                    if r >= *radius {
                        return Ok(Some(i));
                    }
                    *scanned += 1;
                }
                Ok(None)
            }
            (StoppingRule::Min(_), CursorState::Children(children)) => {
                let mut best: Option<usize> = None;
                for c in children.iter_mut() {
                    if let Some(i) = c.advance(prefix)? {
                        best = Some(best.map_or(i, |b| b.min(i)));
                    }
                }
                // A child resolving at T only because the prefix reached T
                // is still a valid value for the minimum.
                Ok(best)
            }
            (StoppingRule::Max(_), CursorState::Children(children)) => {
                let mut worst = Some(0usize);
                for c in children.iter_mut() {
                    match c.advance(prefix)? {
                        Some(i) => worst = worst.map(|w| w.max(i)),
                        None => worst = None,
                    }
                }
                Ok(worst)
            }
            (
                StoppingRule::Switch {
                    event,
                    first,
                    second,
                },
                CursorState::Switch {
                    at,
                    at_index,
                    branch,
                },
            ) => {
                if at_index.is_none() {
                    *at_index = at.advance(prefix)?;
                    let Some(i) = *at_index else {
                        return Ok(None);
                    };
                    let holds = event.condition.holds(prefix.time(i), prefix.state(i));
                    let chosen: &'r StoppingRule<S> = if holds { first } else { second };
                    *branch = Some(Box::new(RuleCursor::new(chosen)));
                }
                let i = at_index.expect("switch time resolved above");
                let b = branch.as_mut().expect("branch chosen with switch time");
                Ok(b.advance(prefix)?.map(|j| j.max(i)))
            }
            (StoppingRule::Custom(_), _) => unreachable!("custom rules handled in advance"),
            _ => unreachable!("cursor state mismatch"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> SamplePath<f64> {
        // y(t) = t on a 0.05 grid.
        SamplePath::<f64>::from_fn(0.0, 1.0, 20, 1, |t| vec![t]).unwrap()
    }

    #[test]
    fn constant_rule_snaps_to_grid() {
        let p = ramp();
        assert!((StoppingRule::constant(0.4).time_on_path(&p).unwrap() - 0.4).abs() < 1e-12);
        assert!((StoppingRule::constant(0.41).time_on_path(&p).unwrap() - 0.45).abs() < 1e-12);
        assert_eq!(StoppingRule::constant(-3.0).time_on_path(&p).unwrap(), 0.0);
        assert_eq!(StoppingRule::constant(7.0).time_on_path(&p).unwrap(), 1.0);
        assert_eq!(StoppingRule::<f64>::Terminal.time_on_path(&p).unwrap(), 1.0);
    }

    #[test]
    fn exit_rule_examples() {
        let p = ramp();
        let r = StoppingRule::first_exit(vec![0.0], 0.25, StoppingRule::constant(0.0)).unwrap();
        assert!((r.time_on_path(&p).unwrap() - 0.25).abs() < 1e-12);

        let flat = SamplePath::from_fn(0.0, 1.0, 20, 1, |_| vec![0.3]).unwrap();
        let r = StoppingRule::first_exit(vec![0.3], 0.1, StoppingRule::constant(0.0)).unwrap();
        assert_eq!(r.time_on_path(&flat).unwrap(), 1.0);

        let r = StoppingRule::first_exit(vec![0.0], 0.25, StoppingRule::Terminal).unwrap();
        assert_eq!(r.time_on_path(&p).unwrap(), 1.0);

        assert!(StoppingRule::first_exit(vec![0.0], 0.0, StoppingRule::Terminal).is_err());
    }

    #[test]
    fn space_time_exit() {
        let flat = SamplePath::<f64>::from_fn(0.0, 1.0, 20, 1, |_| vec![0.0]).unwrap();
        let r =
            StoppingRule::first_exit_space_time(0.5, vec![0.0], 0.2, StoppingRule::constant(0.5))
                .unwrap();
        assert!((r.time_on_path(&flat).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn grid_rule_and_combinators() {
        let p = ramp();
        let g = StoppingRule::DeterministicGrid {
            times: vec![0.2, 0.5, 0.8],
            after: Box::new(StoppingRule::constant(0.5)),
        };
        assert!((g.time_on_path(&p).unwrap() - 0.8).abs() < 1e-12);
        let m = StoppingRule::constant(0.3).min(StoppingRule::constant(0.6));
        assert!((m.time_on_path(&p).unwrap() - 0.3).abs() < 1e-12);
        let m = StoppingRule::constant(0.3).max(StoppingRule::constant(0.6));
        assert!((m.time_on_path(&p).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(
            StoppingRule::constant(0.3).min(StoppingRule::Terminal),
            StoppingRule::constant(0.3)
        );
        assert_eq!(
            StoppingRule::constant(0.3).max(StoppingRule::Terminal),
            StoppingRule::Terminal
        );
    }

    #[test]
    fn incremental_matches_one_shot() {
        let p = SamplePath::<f64>::from_fn(0.0, 1.0, 50, 1, |t| vec![(9.0 * t).sin()]).unwrap();
        let rule = StoppingRule::first_exit(
            vec![0.0],
            0.7,
            StoppingRule::first_exit(vec![0.5], 0.3, StoppingRule::constant(0.1)).unwrap(),
        )
        .unwrap();
        let mut cur = rule.cursor();
        let mut got = None;
        for j in 0..p.len() {
            if let Some(i) = cur.advance(&p.prefix(j)).unwrap() {
                got = Some(i);
                break;
            }
        }
        assert_eq!(got, Some(rule.index_on_path(&p).unwrap()));
    }

    #[test]
    fn custom_rule_commitment_is_checked() {
        let p = ramp();
        // Claims to stop at the current end for every prefix: not committed.
        let fickle =
            StoppingRule::Custom(CustomRule::new("fickle", |pre: &PathPrefix<'_, f64>| {
                Some(pre.end_time())
            }));
        let mut cur = fickle.cursor();
        assert_eq!(cur.advance(&p.prefix(0)).unwrap(), Some(0));
        assert!(matches!(
            cur.advance(&p.prefix(1)),
            Err(GameError::RuleCommitment { .. })
        ));

        let honest =
            StoppingRule::Custom(CustomRule::new("honest", |pre: &PathPrefix<'_, f64>| {
                pre.times().iter().copied().find(|&t| t >= 0.3)
            }));
        let mut cur = honest.cursor();
        for j in 0..p.len() {
            cur.advance(&p.prefix(j)).unwrap();
        }
        assert_eq!(cur.resolved(), Some(6));
    }

    #[test]
    fn custom_rules_do_not_serialize() {
        let r = StoppingRule::<f64>::Custom(CustomRule::new("x", |_: &PathPrefix<'_, f64>| None));
        assert!(serde_json::to_string(&r).is_err());
    }
}
