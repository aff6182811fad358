//! Actionable recourse for linear classifiers.
//!
//! Given a linear model and a population of feature vectors, this crate
//! decides whether each negatively-scored person can flip the prediction by
//! changing actionable features, finds the cheapest such change on a
//! discretized action grid, enumerates alternative changes with distinct
//! supports (flipsets), and audits feasibility and cost over a population.
//!
//! The main entry points are [`solver::solve`], [`audit::run_audit`],
//! [`flipset::enumerate_actions`] and the bounds in [`analysis`].

pub mod actions;
pub mod analysis;
pub mod audit;
pub mod costs;
pub mod error;
pub mod flipset;
pub mod model;
pub mod report;
pub mod solver;

pub use actions::{
    build_action_grid, fit_percentiles, load_action_set, ActionGrid, ActionSetSpec, Actionability, FeatureActionSpec,
    FeatureKind, PercentileModel,
};
pub use costs::{CostSpec, CostTable, CostVariant, Objective};
pub use error::{RecourseError, Result};
pub use model::{load_dataset, load_model, Dataset, DatasetOptions, LinearModel, Prediction};
pub use solver::{
    brute_force_solve, closed_form_cost, endpoint_feasibility, problem_for_point, solve, ProblemOptions,
    RecourseProblem, RecourseSolution, SolveStatus,
};
