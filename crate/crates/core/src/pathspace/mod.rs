//! Discrete path space: sample paths, stopping rules, action selectors and
//! elementary strategies.
//!
//! Rules and selectors only ever receive a [`PathPrefix`], so whatever they
//! compute at time `t` is a function of the states observed up to `t`.

mod event;
mod path;
mod rule;
mod selector;
mod strategy;

pub use event::{Condition, Field, PathEvent};
pub use path::{PathPrefix, SamplePath};
pub use rule::{CustomRule, RuleCursor, StoppingRule};
pub use selector::{ActionSelector, CustomSelector, FeedbackTable};
pub use strategy::{ElementaryStrategy, Segment, StrategyCursor};

/// `y -> first grid time t >= after(y)` with `|y(t) - center| >= radius`.
pub fn first_exit_rule<S: crate::scalar::Scalar>(
    center: Vec<S>,
    radius: S,
    after: StoppingRule<S>,
) -> crate::error::Result<StoppingRule<S>> {
    StoppingRule::first_exit(center, radius, after)
}
