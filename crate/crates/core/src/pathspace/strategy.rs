//! Elementary strategies: finitely many stopping rules with actions held
//! constant in between, plus concatenation and the switch construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::PathEvent;
use super::path::{PathPrefix, SamplePath};
use super::rule::{RuleCursor, StoppingRule};
use super::selector::{ActionSelector, FeedbackTable};
use crate::dynamics::{ControlSet, Player};
use crate::error::{GameError, Result};
use crate::scalar::Scalar;

/// One `(tau_k, xi_k)` pair: the action `xi_k`, decided from the prefix up
/// to `tau_{k-1}`, is held on `(tau_{k-1}, tau_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Segment<S: Scalar> {
    pub until: StoppingRule<S>,
    pub selector: ActionSelector<S>,
}

impl<S: Scalar> Segment<S> {
    pub fn new(until: StoppingRule<S>, selector: ActionSelector<S>) -> Self {
        Self { until, selector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ElementaryStrategy<S: Scalar> {
    player: Player,
    controls: Arc<ControlSet<S>>,
    start: StoppingRule<S>,
    segments: Vec<Segment<S>>,
}

impl<S: Scalar> ElementaryStrategy<S> {
    pub fn new(
        player: Player,
        controls: Arc<ControlSet<S>>,
        start: StoppingRule<S>,
        segments: Vec<Segment<S>>,
    ) -> Result<Self> {
        let s = Self {
            player,
            controls,
            start,
            segments,
        };
        s.validate()?;
        Ok(s)
    }

    /// Static checks: at least one segment, last rule `Terminal`, selector
    /// outputs inside the control set where statically known.
    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.segments.last() else {
            return Err(GameError::StrategyInvariant(
                "strategy has no segments".into(),
            ));
        };
        if !last.until.is_terminal() {
            return Err(GameError::StrategyInvariant(
                "last segment must run until the horizon".into(),
            ));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if let Some(m) = seg.selector.max_index() {
                if m >= self.controls.len() {
                    return Err(GameError::StrategyInvariant(format!(
                        "segment {k} selects index {m} from `{}` with {} points",
                        self.controls.label(),
                        self.controls.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `xi` for all of `(s, T]`.
    pub fn constant(player: Player, controls: Arc<ControlSet<S>>, index: usize) -> Result<Self> {
        Self::constant_from(player, controls, index, StoppingRule::constant(S::zero()))
    }

    /// `xi` on `(start, T]`.
    pub fn constant_from(
        player: Player,
        controls: Arc<ControlSet<S>>,
        index: usize,
        start: StoppingRule<S>,
    ) -> Result<Self> {
        Self::new(
            player,
            controls,
            start,
            vec![Segment::new(
                StoppingRule::Terminal,
                ActionSelector::constant(index),
            )],
        )
    }

    /// Re-decides with `selector` at each time of `decisions`; the first
    /// decision time is the start.
    pub fn with_decisions(
        player: Player,
        controls: Arc<ControlSet<S>>,
        decisions: &[S],
        selector: ActionSelector<S>,
    ) -> Result<Self> {
        let mut times = sorted_times(decisions)?;
        let first = times.remove(0);
        Self::with_decisions_from(
            player,
            controls,
            StoppingRule::constant(first),
            &times,
            selector,
        )
    }

    /// Starts at `start` and re-decides at each listed time after it.
    pub fn with_decisions_from(
        player: Player,
        controls: Arc<ControlSet<S>>,
        start: StoppingRule<S>,
        decisions: &[S],
        selector: ActionSelector<S>,
    ) -> Result<Self> {
        let times = if decisions.is_empty() {
            Vec::new()
        } else {
            sorted_times(decisions)?
        };
        let mut segments: Vec<Segment<S>> = times
            .iter()
            .map(|&d| {
                let until = match &start {
                    StoppingRule::Constant { time } => StoppingRule::constant(time.max(d)),
                    other => other.clone().max(StoppingRule::constant(d)),
                };
                Segment::new(until, selector.clone())
            })
            .collect();
        segments.push(Segment::new(StoppingRule::Terminal, selector));
        Self::new(player, controls, start, segments)
    }

    /// Grid-feedback strategy re-deciding at `decisions`.
    pub fn feedback(
        player: Player,
        controls: Arc<ControlSet<S>>,
        table: Arc<FeedbackTable<S>>,
        decisions: &[S],
    ) -> Result<Self> {
        Self::with_decisions(player, controls, decisions, ActionSelector::feedback(table))
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn controls(&self) -> &Arc<ControlSet<S>> {
        &self.controls
    }

    pub fn start(&self) -> &StoppingRule<S> {
        &self.start
    }

    pub fn segments(&self) -> &[Segment<S>] {
        &self.segments
    }

    pub fn cursor(&self) -> StrategyCursor<'_, S> {
        StrategyCursor::new(self)
    }

    /// Control index held on the grid interval containing `t`.
    pub fn action_index_at(&self, path: &SamplePath<S>, t: S) -> Result<usize> {
        let j = path.index_before(t).ok_or_else(|| GameError::OutOfDomain {
            t: t.f64(),
            start: path.start_time().f64(),
        })?;
        if j >= path.n_steps() {
            return Err(GameError::OutOfDomain {
                t: t.f64(),
                start: path.start_time().f64(),
            });
        }
        self.cursor().action(&path.prefix(j))
    }

    /// Control point held at time `t` on `path`.
    pub fn action_at(&self, path: &SamplePath<S>, t: S) -> Result<&[S]> {
        Ok(self.controls.point(self.action_index_at(path, t)?))
    }

    fn check_compatible(&self, other: &Self, what: &str) -> Result<()> {
        if self.player != other.player {
            return Err(GameError::StrategyMismatch(format!(
                "{what}: players {:?} and {:?} differ",
                self.player, other.player
            )));
        }
        if !Arc::ptr_eq(&self.controls, &other.controls) && self.controls != other.controls {
            return Err(GameError::StrategyMismatch(format!(
                "{what}: control sets `{}` and `{}` differ",
                self.controls.label(),
                other.controls.label()
            )));
        }
        Ok(())
    }

    /// `head` up to `tau = tail.start`, then `tail`.
    pub fn concatenate(head: &Self, tail: &Self) -> Result<Self> {
        head.check_compatible(tail, "concatenation")?;
        let tau = tail.start.clone();
        let mut segments: Vec<Segment<S>> = head
            .segments
            .iter()
            .map(|seg| Segment::new(seg.until.clone().min(tau.clone()), seg.selector.clone()))
            .collect();
        segments.extend(tail.segments.iter().cloned());
        Self::new(
            head.player,
            head.controls.clone(),
            head.start.clone(),
            segments,
        )
    }

    /// Follows `first` on `event` and `second` off it. Both are expected to
    /// start no earlier than the event's time.
    pub fn switch(event: PathEvent<S>, first: &Self, second: &Self) -> Result<Self> {
        first.check_compatible(second, "switch")?;
        let n = first.segments.len().max(second.segments.len());
        let pick = |s: &Self, k: usize| -> Segment<S> {
            s.segments.get(k).cloned().unwrap_or_else(|| {
                Segment::new(
                    StoppingRule::Terminal,
                    s.segments[s.segments.len() - 1].selector.clone(),
                )
            })
        };
        let ev = Box::new(event);
        let switch_rule = |a: StoppingRule<S>, b: StoppingRule<S>| StoppingRule::Switch {
            event: ev.clone(),
            first: Box::new(a),
            second: Box::new(b),
        };
        let mut segments = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (pick(first, k), pick(second, k));
            let until = if k + 1 == n {
                StoppingRule::Terminal
            } else {
                switch_rule(a.until, b.until)
            };
            let selector = ActionSelector::Switch {
                event: ev.clone(),
                first: Box::new(a.selector),
                second: Box::new(b.selector),
            };
            segments.push(Segment::new(until, selector));
        }
        let start = switch_rule(first.start.clone(), second.start.clone());
        Self::new(first.player, first.controls.clone(), start, segments)
    }

    /// The strategy starting at `tau` that plays `map[i]` whenever `source`
    /// plays index `i`.
    pub fn mapped_from(
        source: &Self,
        tau: StoppingRule<S>,
        player: Player,
        controls: Arc<ControlSet<S>>,
        map: Vec<usize>,
    ) -> Result<Self> {
        if map.len() != source.controls.len() {
            return Err(GameError::Refused {
                at: "response map".into(),
                reason: format!(
                    "map has {} entries for {} source controls",
                    map.len(),
                    source.controls.len()
                ),
            });
        }
        let n = source.segments.len();
        let mut segments = Vec::with_capacity(n);
        for (k, seg) in source.segments.iter().enumerate() {
            let prev = if k == 0 {
                source.start.clone()
            } else {
                source.segments[k - 1].until.clone()
            };
            let until = if k + 1 == n {
                StoppingRule::Terminal
            } else {
                tau.clone().max(seg.until.clone())
            };
            segments.push(Segment::new(
                until,
                ActionSelector::Delegate {
                    rule: prev,
                    inner: Box::new(seg.selector.clone()),
                    map: Some(map.clone()),
                },
            ));
        }
        Self::new(player, controls, tau, segments)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| GameError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self =
            serde_json::from_str(text).map_err(|e| GameError::Serialization(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn label(&self) -> String {
        let segs: Vec<String> = self
            .segments
            .iter()
            .map(|s| format!("{} until {}", s.selector.label(), s.until.label()))
            .collect();
        format!("from {}: {}", self.start.label(), segs.join("; "))
    }
}

fn sorted_times<S: Scalar>(times: &[S]) -> Result<Vec<S>> {
    if times.is_empty() {
        return Err(GameError::InvalidArgument(
            "empty decision-time list".into(),
        ));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(GameError::InvalidArgument(
            "decision times must be finite".into(),
        ));
    }
    let mut v = times.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite times compare"));
    v.dedup();
    Ok(v)
}

/// Per-path evaluator of a strategy.
///
/// `action` is called with prefixes of one path ending at the decision index
/// `j` (non-decreasing across calls) and returns the control index held on
/// `(t_j, t_{j+1}]`.
pub struct StrategyCursor<'a, S: Scalar> {
    strategy: &'a ElementaryStrategy<S>,
    start: RuleCursor<'a, S>,
    start_index: Option<usize>,
    segment: usize,
    rule: Option<RuleCursor<'a, S>>,
    prev_index: usize,
    cached: Option<usize>,
}

impl<'a, S: Scalar> StrategyCursor<'a, S> {
    pub fn new(strategy: &'a ElementaryStrategy<S>) -> Self {
        Self {
            strategy,
            start: strategy.start.cursor(),
            start_index: None,
            segment: 0,
            rule: None,
            prev_index: 0,
            cached: None,
        }
    }

    /// Index of the segment currently in force (after the last `action`).
    pub fn segment(&self) -> usize {
        self.segment
    }

    pub fn action(&mut self, prefix: &PathPrefix<'_, S>) -> Result<usize> {
        let j = prefix.last_index();
        if self.start_index.is_none() {
            self.start_index = self.start.advance(prefix)?;
            if let Some(i) = self.start_index {
                self.prev_index = i;
            }
        }
        let start_ok = matches!(self.start_index, Some(i) if i <= j);
        if !start_ok || prefix.reaches_horizon() {
            let start = self.start_index.map_or(f64::NAN, |i| prefix.time(i).f64());
            let t = if prefix.reaches_horizon() {
                f64::INFINITY
            } else {
                prefix.end_time().f64()
            };
            return Err(GameError::OutOfDomain { t, start });
        }
        let segments = &self.strategy.segments;
        loop {
            if self.segment >= segments.len() {
                return Err(GameError::StrategyInvariant(
                    "ran past the last segment before the horizon".into(),
                ));
            }
            let rule = self
                .rule
                .get_or_insert_with(|| segments[self.segment].until.cursor());
            match rule.advance(prefix)? {
                Some(r) => {
                    if r < self.prev_index {
                        return Err(GameError::StrategyInvariant(format!(
                            "rule {} of the strategy stops at {} before the previous rule's {}",
                            self.segment,
                            prefix.time(r).f64(),
                            prefix.time(self.prev_index).f64()
                        )));
                    }
                    self.prev_index = r;
                    self.segment += 1;
                    self.rule = None;
                    self.cached = None;
                }
                None => break,
            }
        }
        if let Some(c) = self.cached {
            return Ok(c);
        }
        let seg = &segments[self.segment];
        let idx = seg.selector.select(&prefix.truncate(self.prev_index))?;
        if idx >= self.strategy.controls.len() {
            return Err(GameError::StrategyInvariant(format!(
                "selector `{}` returned index {idx} outside `{}`",
                seg.selector.label(),
                self.strategy.controls.label()
            )));
        }
        self.cached = Some(idx);
        Ok(idx)
    }
}
