//! Numerical laboratory for two-player zero-sum stochastic differential games
//! played over elementary feedback strategies.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` and `*32` aliases below name the common concrete instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod field;
pub mod game_mc;
pub mod isaacs;
pub mod pathspace;
pub mod perron;
pub mod presets;
pub mod scalar;
pub mod sde;

pub use dynamics::{
    audit_coefficients, hamiltonian, minimax, AuditReport, AuditSpec, Coefficients, ControlSet,
    FnCoefficients, GameProblem, HamiltonianQuery, Minimax, Player, Side,
};
pub use error::{GameError, Result};
pub use field::{Axis, GridFunction, SpaceTimeGrid, TestFunction};
pub use game_mc::{
    best_response, check_half_dpp, check_saddle, estimate_matrix, estimate_value, isaacs_gap,
    upper_lower_values, CertificateKind, CertificateReport, EstimateMatrix, FamilySpec,
    PathFunctional, Payoff, RandomFamilySpec, SemiClass, Sense, StoppedValue, StrategyFamily,
    UpperLowerValues, Verdict,
};
pub use isaacs::{
    dpp_residual, extract_feedback, feedback_from, solve, Boundary, CflInfo, ValueGrid,
};
pub use pathspace::{
    ActionSelector, Condition, ElementaryStrategy, FeedbackTable, Field, PathEvent, PathPrefix,
    SamplePath, Segment, StoppingRule,
};
pub use perron::{
    bump_sub, bump_super, certify, lattice_combine, BumpSpec, CertifySpec, SemiSolutionCandidate,
    WitnessProducer,
};
pub use scalar::Scalar;
pub use sde::{simulate, simulate_batch, BatchResult, SimulationConfig, StrategyPair, Trajectory};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type GameProblem64 = GameProblem<f64>;
pub type GameProblem32 = GameProblem<f32>;
pub type ValueGrid64 = ValueGrid<f64>;
pub type ValueGrid32 = ValueGrid<f32>;
pub type Strategy64 = ElementaryStrategy<f64>;
pub type Strategy32 = ElementaryStrategy<f32>;
pub type Candidate64 = SemiSolutionCandidate<f64>;
pub type Candidate32 = SemiSolutionCandidate<f32>;
pub type Grid64 = SpaceTimeGrid<f64>;
pub type Grid32 = SpaceTimeGrid<f32>;
