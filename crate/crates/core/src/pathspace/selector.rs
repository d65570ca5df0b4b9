//! Action selectors: prefix-measurable choices of a control index.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::PathEvent;
use super::path::PathPrefix;
use super::rule::StoppingRule;
use crate::error::{GameError, Result};
use crate::field::SpaceTimeGrid;
use crate::scalar::Scalar;

/// Per-(time level, node) control indices, read at the nearest level and
/// nearest node; states outside the box are clamped to its boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeedbackTable<S: Scalar> {
    grid: SpaceTimeGrid<S>,
    indices: Vec<u16>,
}

impl<S: Scalar> FeedbackTable<S> {
    pub fn new(grid: SpaceTimeGrid<S>, indices: Vec<u16>) -> Result<Self> {
        let expected = grid.n_levels() * grid.n_nodes();
        if indices.len() != expected {
            return Err(GameError::InvalidArgument(format!(
                "feedback table has {} entries, grid needs {expected}",
                indices.len()
            )));
        }
        Ok(Self { grid, indices })
    }

    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        &self.grid
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn max_index(&self) -> usize {
        self.indices.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn lookup(&self, t: S, x: &[S]) -> usize {
        let level = self.grid.nearest_level(t);
        let node = self.grid.nearest_node(x);
        self.indices[level * self.grid.n_nodes() + node] as usize
    }
}

type SelectFn<S> = dyn Fn(&PathPrefix<'_, S>) -> usize + Send + Sync;

/// User-supplied selector; must depend on the prefix only.
#[derive(Clone)]
pub struct CustomSelector<S: Scalar> {
    pub label: String,
    f: Arc<SelectFn<S>>,
}

impl<S: Scalar> CustomSelector<S> {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&PathPrefix<'_, S>) -> usize + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl<S: Scalar> fmt::Debug for CustomSelector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomSelector({})", self.label)
    }
}

impl<S: Scalar> PartialEq for CustomSelector<S> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// Chooses an index into the owning player's control set from a prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "",
    tag = "type",
    content = "params",
    rename_all = "snake_case"
)]
pub enum ActionSelector<S: Scalar> {
    Constant {
        index: usize,
    },
    /// `below` if the last state's `axis` coordinate is `< threshold`,
    /// `above` otherwise.
    Threshold {
        axis: usize,
        threshold: S,
        below: usize,
        above: usize,
    },
    GridFeedback {
        table: Arc<FeedbackTable<S>>,
    },
    /// `first` on the event, `second` off it. The event must be decided by
    /// the prefix the selector is handed.
    Switch {
        event: Box<PathEvent<S>>,
        first: Box<ActionSelector<S>>,
        second: Box<ActionSelector<S>>,
    },
    /// Evaluates `inner` on the prefix cut at `rule`, then optionally maps
    /// the index through `map`.
    Delegate {
        rule: StoppingRule<S>,
        inner: Box<ActionSelector<S>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map: Option<Vec<usize>>,
    },
    #[serde(skip)]
    Custom(CustomSelector<S>),
}

impl<S: Scalar> ActionSelector<S> {
    pub fn constant(index: usize) -> Self {
        ActionSelector::Constant { index }
    }

    pub fn feedback(table: Arc<FeedbackTable<S>>) -> Self {
        ActionSelector::GridFeedback { table }
    }

    /// Control index chosen on `prefix`.
    pub fn select(&self, prefix: &PathPrefix<'_, S>) -> Result<usize> {
        match self {
            ActionSelector::Constant { index } => Ok(*index),
            ActionSelector::Threshold {
                axis,
                threshold,
                below,
                above,
            } => {
                let x = prefix.last_state();
                let c = x.get(*axis).ok_or_else(|| {
                    GameError::StrategyInvariant(format!(
                        "threshold axis {axis} outside state dimension {}",
                        x.len()
                    ))
                })?;
                Ok(if *c < *threshold { *below } else { *above })
            }
            ActionSelector::GridFeedback { table } => {
                Ok(table.lookup(prefix.end_time(), prefix.last_state()))
            }
            ActionSelector::Switch {
                event,
                first,
                second,
            } => match event.decide(prefix)? {
                Some(true) => first.select(prefix),
                Some(false) => second.select(prefix),
                None => Err(GameError::StrategyInvariant(format!(
                    "switch event undecided on prefix ending at {}",
                    prefix.end_time()
                ))),
            },
            ActionSelector::Delegate { rule, inner, map } => {
                let cut = rule.index_on(prefix)?.ok_or_else(|| {
                    GameError::StrategyInvariant(format!(
                        "delegate rule `{}` unresolved on prefix ending at {}",
                        rule.label(),
                        prefix.end_time()
                    ))
                })?;
                let i = inner.select(&prefix.truncate(cut))?;
                match map {
                    None => Ok(i),
                    Some(m) => m.get(i).copied().ok_or_else(|| {
                        GameError::StrategyInvariant(format!(
                            "response map has no entry for index {i}"
                        ))
                    }),
                }
            }
            ActionSelector::Custom(c) => Ok((c.f)(prefix)),
        }
    }

    /// Largest index this selector can statically produce, when known.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            ActionSelector::Constant { index } => Some(*index),
            ActionSelector::Threshold { below, above, .. } => Some((*below).max(*above)),
            ActionSelector::GridFeedback { table } => Some(table.max_index()),
            ActionSelector::Switch { first, second, .. } => {
                Some(first.max_index()?.max(second.max_index()?))
            }
            ActionSelector::Delegate { inner, map, .. } => match map {
                Some(m) => m.iter().copied().max(),
                None => inner.max_index(),
            },
            ActionSelector::Custom(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ActionSelector::Constant { index } => format!("const[{index}]"),
            ActionSelector::Threshold {
                axis,
                threshold,
                below,
                above,
            } => {
                format!("x{axis}<{threshold}?[{below}]:[{above}]")
            }
            ActionSelector::GridFeedback { .. } => "feedback".into(),
            ActionSelector::Switch { first, second, .. } => {
                format!("switch({} | {})", first.label(), second.label())
            }
            ActionSelector::Delegate { inner, map, .. } => match map {
                Some(_) => format!("h({})", inner.label()),
                None => format!("delayed({})", inner.label()),
            },
            ActionSelector::Custom(c) => c.label.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Axis;
    use crate::pathspace::path::SamplePath;

    #[test]
    fn threshold_and_feedback() {
        let p = SamplePath::from_fn(0.0, 1.0, 10, 1, |t| vec![t - 0.5]).unwrap();
        let th = ActionSelector::Threshold {
            axis: 0,
            threshold: 0.0,
            below: 3,
            above: 7,
        };
        assert_eq!(th.select(&p.prefix(2)).unwrap(), 3);
        assert_eq!(th.select(&p.prefix(8)).unwrap(), 7);

        let grid = SpaceTimeGrid::new(vec![Axis::new(-1.0, 1.0, 3)], 2, 1.0).unwrap();
        // Levels 0..=2, nodes -1, 0, 1.
        let table = FeedbackTable::new(grid, vec![0, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let fb = ActionSelector::feedback(Arc::new(table));
        let q = SamplePath::from_fn(0.0, 1.0, 10, 1, |t| vec![2.0 * t - 1.0]).unwrap();
        assert_eq!(fb.select(&q.prefix(0)).unwrap(), 0);
        assert_eq!(fb.select(&q.prefix(5)).unwrap(), 4);
        assert_eq!(fb.select(&q.full()).unwrap(), 8);
        assert_eq!(fb.select(&p.prefix(5)).unwrap(), 4);
    }

    #[test]
    fn delegate_reads_the_cut_prefix() {
        let p = SamplePath::from_fn(0.0, 1.0, 10, 1, |t| vec![t]).unwrap();
        let d = ActionSelector::Delegate {
            rule: StoppingRule::constant(0.2),
            inner: Box::new(ActionSelector::Threshold {
                axis: 0,
                threshold: 0.5,
                below: 0,
                above: 1,
            }),
            map: Some(vec![4, 9]),
        };
        assert_eq!(d.select(&p.full()).unwrap(), 4);
        assert!(d.select(&p.prefix(1)).is_err());
    }

    #[test]
    fn feedback_table_size_checked() {
        let grid = SpaceTimeGrid::new(vec![Axis::new(-1.0, 1.0, 3)], 2, 1.0).unwrap();
        assert!(FeedbackTable::<f64>::new(grid, vec![0; 8]).is_err());
    }
}
