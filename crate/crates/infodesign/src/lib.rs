//! Finite-state information design toolkit.
//!
//! Computes concave envelopes over the belief simplex, the set of jointly
//! achievable expected values under Bayes-plausibility, optimal signal
//! structures for constrained objectives, and fixed points of a dynamic
//! information-acquisition Bellman equation.

pub mod apps;
pub mod belief;
pub mod concavify;
pub mod dynamic;
pub mod error;
pub mod grid;
pub mod lp;
pub mod objective;
pub mod posset;
pub mod solver;
pub mod value;

pub use apps::{
    critical_belief, screening_exhaustive, screening_solve, voters_solve, Menu, ScreenSpec, ScreenType, Voter,
    VoterOutcome, VoterSpec,
};
pub use belief::{Belief, SignalStructure};
pub use concavify::{caratheodory_reduce, concavify, concavify_on, CavResult};
pub use dynamic::{bellman_operator, ri_solve, value_iterate, CostFn, DynamicSpec, ValueTable};
pub use error::{Error, Result};
pub use grid::SimplexGrid;
pub use objective::{CompiledObjective, Objective, ObjectiveSpec};
pub use posset::{approximate_set, default_directions, SetApprox};
pub use solver::{
    solve_convex_constrained, solve_generic, solve_smooth, solve_with_slack, value_profile,
    Constraint, ProblemSpec, Solution,
};
pub use value::{expected_values, BeliefFn, ValueFunction};
