//! Events decided at a stopping time from the state observed there.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::path::PathPrefix;
use super::rule::StoppingRule;
use crate::error::Result;
use crate::field::{GridFunction, TestFunction};
use crate::scalar::{dist, Scalar};

/// A scalar field on space-time that events can compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum Field<S: Scalar> {
    Constant {
        value: S,
    },
    Grid {
        function: Arc<GridFunction<S>>,
    },
    /// `phi(t, x) + shift`.
    Test {
        phi: TestFunction<S>,
        shift: S,
    },
}

impl<S: Scalar> Field<S> {
    pub fn value(&self, t: S, x: &[S]) -> S {
        match self {
            Field::Constant { value } => *value,
            Field::Grid { function } => function.eval(t, x),
            Field::Test { phi, shift } => phi.value(t, x) + *shift,
        }
    }
}

/// Predicate on a single space-time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum Condition<S: Scalar> {
    Always,
    /// `lhs < rhs` (or `<=` when not strict).
    Compare {
        lhs: Field<S>,
        rhs: Field<S>,
        strict: bool,
    },
    /// `|x - center| < radius`, or the space-time max-norm ball when `t0`
    /// is set.
    InBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<S>,
        center: Vec<S>,
        radius: S,
    },
    And {
        all: Vec<Condition<S>>,
    },
    Not {
        inner: Box<Condition<S>>,
    },
}

impl<S: Scalar> Condition<S> {
    pub fn holds(&self, t: S, x: &[S]) -> bool {
        match self {
            Condition::Always => true,
            Condition::Compare { lhs, rhs, strict } => {
                let (a, b) = (lhs.value(t, x), rhs.value(t, x));
                if *strict {
                    a < b
                } else {
                    a <= b
                }
            }
            Condition::InBall { t0, center, radius } => {
                let mut r = dist(x, center);
                if let Some(t0) = t0 {
                    r = r.max((t - *t0).abs());
                }
                r < *radius
            }
            Condition::And { all } => all.iter().all(|c| c.holds(t, x)),
            Condition::Not { inner } => !inner.holds(t, x),
        }
    }
}

/// The event `{ condition holds at (at(y), y(at(y))) }`, which is known from
/// the path up to the stopping time `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PathEvent<S: Scalar> {
    pub at: StoppingRule<S>,
    pub condition: Condition<S>,
}

impl<S: Scalar> PathEvent<S> {
    pub fn new(at: StoppingRule<S>, condition: Condition<S>) -> Self {
        Self { at, condition }
    }

    /// `Some(holds)` once `at` has triggered within the prefix, else `None`.
    pub fn decide(&self, prefix: &PathPrefix<'_, S>) -> Result<Option<bool>> {
        Ok(self
            .at
            .index_on(prefix)?
            .map(|i| self.condition.holds(prefix.time(i), prefix.state(i))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::path::SamplePath;

    #[test]
    fn ball_and_compare() {
        let ball = Condition::InBall {
            t0: Some(0.5),
            center: vec![0.0],
            radius: 0.2,
        };
        assert!(ball.holds(0.6, &[0.1]));
        assert!(!ball.holds(0.75, &[0.0]));
        let cmp = Condition::Compare {
            lhs: Field::Constant { value: 1.0 },
            rhs: Field::Test {
                phi: TestFunction::Quadratic {
                    t0: 0.0,
                    x0: vec![0.0],
                    constant: 0.0,
                    t_lin: 0.0,
                    t_quad: 0.0,
                    x_lin: vec![0.0],
                    x_quad: vec![1.0],
                },
                shift: 0.0,
            },
            strict: true,
        };
        assert!(cmp.holds(0.0, &[2.0]));
        assert!(!cmp.holds(0.0, &[1.0]));
        let not = Condition::Not {
            inner: Box::new(cmp),
        };
        assert!(not.holds(0.0, &[1.0]));
    }

    #[test]
    fn decided_only_after_stopping_time() {
        let p = SamplePath::from_fn(0.0, 1.0, 10, 1, |t| vec![t]).unwrap();
        let ev = PathEvent::new(
            StoppingRule::constant(0.5),
            Condition::InBall {
                t0: None,
                center: vec![0.5],
                radius: 0.01,
            },
        );
        assert_eq!(ev.decide(&p.prefix(3)).unwrap(), None);
        assert_eq!(ev.decide(&p.prefix(5)).unwrap(), Some(true));
        assert_eq!(ev.decide(&p.full()).unwrap(), Some(true));
    }
}
