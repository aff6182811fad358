//! Exact minimal-cost recourse on a discretized action grid.
//!
//! [`solve`] certifies either the global optimum or infeasibility of
//!
//! ```text
//! min  cost(a)   s.t.  score(x) + sum_j w_j a_j >= margin,  a_j in grid_j,
//!                      at most one change per linked group,
//!                      support(a) not in excluded_supports
//! ```
//!
//! for separable-sum and minimax cost tables. [`brute_force_solve`] is the
//! exhaustive oracle used to cross-check it and to evaluate non-separable
//! costs such as the scaled Euclidean norm.

mod brute;
mod search;

pub use brute::{brute_force_solve, brute_force_solve_with_cap, DEFAULT_BRUTE_FORCE_CAP};

use std::collections::BTreeSet;

use serde::Serialize;

use crate::actions::{build_action_grid, ActionGrid, ActionSetSpec, PercentileModel};
use crate::costs::{CostSpec, CostTable, Objective};
use crate::error::{RecourseError, Result};
use crate::model::LinearModel;

use search::{Candidate, Choice, Search, Var};

/// Absolute slack granted to the flip constraint.
pub const FLIP_SLACK: f64 = 1e-9;

/// One instance of the discretized recourse problem.
#[derive(Debug, Clone)]
pub struct RecourseProblem {
    model: LinearModel,
    x: Vec<f64>,
    score: f64,
    grid: ActionGrid,
    table: CostTable,
    excluded: BTreeSet<Vec<usize>>,
    margin: f64,
}

impl RecourseProblem {
    pub fn new(model: &LinearModel, x: &[f64], grid: ActionGrid, table: CostTable) -> Result<Self> {
        let score = model.score(x)?;
        if grid.dim() != model.dim() || table.costs.len() != model.dim() {
            return Err(RecourseError::Dimension {
                expected: model.dim(),
                got: grid.dim().min(table.costs.len()),
            });
        }
        for (j, (f, costs)) in grid.features.iter().zip(&table.costs).enumerate() {
            let name = &model.feature_names()[j];
            if f.current != x[j] {
                return Err(RecourseError::feature(name, "grid was built for a different point"));
            }
            if costs.len() != f.actions.len() || f.gains.len() != f.actions.len() {
                return Err(RecourseError::feature(
                    name,
                    "cost table does not match the action grid",
                ));
            }
            if !f.actions.contains(&0.0) {
                return Err(RecourseError::feature(name, "action grid must contain 0"));
            }
            if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(RecourseError::feature(name, "costs must be finite and nonnegative"));
            }
            if costs[f.zero_index()] != 0.0 {
                return Err(RecourseError::feature(name, "the zero action must cost 0"));
            }
        }
        for group in &grid.linked_groups {
            if group.iter().any(|&j| j >= model.dim()) {
                return Err(RecourseError::input("linked group refers to an unknown feature"));
            }
        }
        Ok(RecourseProblem {
            model: model.clone(),
            x: x.to_vec(),
            score,
            grid,
            table,
            excluded: BTreeSet::new(),
            margin: 0.0,
        })
    }

    /// Requires `score(x + a) >= margin` instead of `>= 0`.
    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(RecourseError::input(format!(
                "margin {margin} must be finite and nonnegative"
            )));
        }
        self.margin = margin;
        Ok(self)
    }

    /// Forbids actions whose support is exactly `support`. Subsets and
    /// supersets stay allowed.
    pub fn exclude_support(&mut self, support: &[usize]) -> Result<()> {
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        if let Some(&j) = support
            .iter()
            .find(|&&j| j >= self.grid.dim() || !self.grid.features[j].is_actionable())
        {
            return Err(RecourseError::input(format!(
                "excluded support contains non-actionable feature {j}"
            )));
        }
        self.excluded.insert(support);
        Ok(())
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn point(&self) -> &[f64] {
        &self.x
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn cost_table(&self) -> &CostTable {
        &self.table
    }

    pub fn objective(&self) -> Objective {
        self.table.objective
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn excluded_supports(&self) -> &BTreeSet<Vec<usize>> {
        &self.excluded
    }

    /// Gain the actions must add to the current score, slack included.
    fn required_gain(&self) -> f64 {
        self.margin - self.score - FLIP_SLACK
    }

    fn already_flipped(&self) -> bool {
        self.required_gain() <= 0.0 && self.excluded.is_empty()
    }

    fn group_of(&self) -> Vec<Option<usize>> {
        let mut group = vec![None; self.grid.dim()];
        for (g, members) in self.grid.linked_groups.iter().enumerate() {
            for &j in members {
                group[j] = Some(g);
            }
        }
        group
    }

    /// Searchable variables: features with at least one non-zero action.
    /// `cost_of` maps a table cost to the search cost, `None` dropping the
    /// action.
    fn vars(&self, cost_of: impl Fn(f64) -> Option<f64>) -> Vec<Var> {
        let group = self.group_of();
        self.grid
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_actionable())
            .map(|(j, f)| {
                let mut choices = Vec::with_capacity(f.actions.len());
                let mut zero = 0;
                for ((&action, &gain), &cost) in f.actions.iter().zip(&f.gains).zip(&self.table.costs[j]) {
                    let cost = if action == 0.0 {
                        zero = choices.len();
                        Some(0.0)
                    } else {
                        cost_of(cost)
                    };
                    if let Some(cost) = cost {
                        choices.push(Choice { gain, cost, action });
                    }
                }
                Var {
                    feature: j,
                    group: group[j],
                    zero,
                    choices,
                }
            })
            .filter(|v| v.choices.len() > 1)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NoActionNeeded,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes_explored: u64,
    pub proven_optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecourseSolution {
    pub status: SolveStatus,
    /// Full-length action vector when `Optimal`.
    pub action: Option<Vec<f64>>,
    pub cost: Option<f64>,
    /// Indices of changed features, ascending.
    pub support: Vec<usize>,
    pub stats: SearchStats,
}

impl RecourseSolution {
    pub(crate) fn no_action(nodes: u64) -> Self {
        RecourseSolution {
            status: SolveStatus::NoActionNeeded,
            action: None,
            cost: Some(0.0),
            support: vec![],
            stats: SearchStats {
                nodes_explored: nodes,
                proven_optimal: true,
            },
        }
    }

    pub(crate) fn infeasible(nodes: u64) -> Self {
        RecourseSolution {
            status: SolveStatus::Infeasible,
            action: None,
            cost: None,
            support: vec![],
            stats: SearchStats {
                nodes_explored: nodes,
                proven_optimal: true,
            },
        }
    }

    pub(crate) fn optimal(action: Vec<f64>, cost: f64, nodes: u64) -> Self {
        let support = action
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, _)| j)
            .collect();
        RecourseSolution {
            status: SolveStatus::Optimal,
            action: Some(action),
            cost: Some(cost),
            support,
            stats: SearchStats {
                nodes_explored: nodes,
                proven_optimal: true,
            },
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

fn action_vector(d: usize, vars: &[Var], cand: &Candidate) -> Vec<f64> {
    let mut action = vec![0.0; d];
    for (var, &k) in vars.iter().zip(&cand.choices) {
        action[var.feature] = var.choices[k].action;
    }
    action
}

/// Certified optimum (or infeasibility) of `problem`.
pub fn solve(problem: &RecourseProblem) -> RecourseSolution {
    if problem.already_flipped() {
        return RecourseSolution::no_action(0);
    }
    match problem.objective() {
        Objective::SeparableSum => solve_separable(problem),
        Objective::Minimax => solve_minimax(problem),
    }
}

fn solve_separable(problem: &RecourseProblem) -> RecourseSolution {
    let search = Search::new(problem.vars(Some), problem.required_gain(), &problem.excluded);
    let outcome = search.run();
    match outcome.best {
        None => RecourseSolution::infeasible(outcome.nodes),
        Some(cand) => {
            let action = action_vector(problem.grid.dim(), search.vars(), &cand);
            RecourseSolution::optimal(action, cand.cost, outcome.nodes)
        }
    }
}

/// Smallest threshold `t` such that some flipping action uses only actions
/// with `c_jk <= t`, found by bisection over the distinct table costs. At
/// `t` the action with the fewest changes is returned.
fn solve_minimax(problem: &RecourseProblem) -> RecourseSolution {
    let need = problem.required_gain();
    let mut thresholds: Vec<f64> = problem
        .vars(Some)
        .iter()
        .flat_map(|v| v.choices.iter().map(|c| c.cost))
        .collect();
    thresholds.push(0.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut nodes = 0u64;
    let mut attempt = |t: f64| -> Option<(Vec<f64>, Candidate)> {
        // unit cost per changed feature: the tie-break search at threshold t
        let vars = problem.vars(|c| (c <= t).then_some(1.0));
        let search = Search::new(vars, need, &problem.excluded);
        let outcome = search.run();
        nodes += outcome.nodes;
        outcome
            .best
            .map(|cand| (action_vector(problem.grid.dim(), search.vars(), &cand), cand))
    };

    let last = thresholds.len() - 1;
    let Some(mut found) = attempt(thresholds[last]) else {
        return RecourseSolution::infeasible(nodes);
    };
    let (mut lo, mut hi) = (0usize, last);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match attempt(thresholds[mid]) {
            Some(result) => {
                found = result;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let (action, _) = found;
    RecourseSolution::optimal(action, thresholds[hi], nodes)
}

/// True when the best reachable score on the grid meets the margin, ignoring
/// exclusions and linked groups.
pub fn endpoint_feasibility(problem: &RecourseProblem) -> bool {
    let best: f64 = problem.grid.features.iter().map(|f| f.max_gain()).sum();
    best >= problem.required_gain()
}

/// Minimal `c_x * ||a||` cost to reach the decision boundary from `x` using
/// only the actionable coordinates, in the form
/// `c_x * |w_A . x_A| / ||w_A||^2`.
pub fn closed_form_cost(model: &LinearModel, x: &[f64], actionable: &[bool], c_x: f64) -> Result<f64> {
    model.check_point(x)?;
    if actionable.len() != model.dim() {
        return Err(RecourseError::Dimension {
            expected: model.dim(),
            got: actionable.len(),
        });
    }
    if !(c_x.is_finite() && c_x > 0.0) {
        return Err(RecourseError::input(format!("scaling constant {c_x} must be positive")));
    }
    let (dot, norm2) = unit_score_parts(model, x, actionable);
    if norm2 == 0.0 {
        return Err(RecourseError::input("actionable coefficients are all zero"));
    }
    Ok(c_x * dot.abs() / norm2)
}

/// `(w_A . x_A, ||w_A||^2)`.
pub(crate) fn unit_score_parts(model: &LinearModel, x: &[f64], actionable: &[bool]) -> (f64, f64) {
    model
        .coefficients()
        .iter()
        .zip(x)
        .zip(actionable)
        .filter(|(_, a)| **a)
        .fold((0.0, 0.0), |(dot, norm2), ((w, v), _)| (dot + w * v, norm2 + w * w))
}

/// Options for turning a point into a [`RecourseProblem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemOptions {
    pub default_grid_size: usize,
    /// Drop actions whose gain disagrees in sign with the coefficient.
    pub prune_by_sign: bool,
    pub margin: f64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            default_grid_size: crate::actions::DEFAULT_GRID_SIZE,
            prune_by_sign: true,
            margin: 0.0,
        }
    }
}

/// Builds the grid and cost table for `x` and wraps them in a problem.
/// `spec` must be aligned to `model`.
pub fn problem_for_point(
    model: &LinearModel,
    spec: &ActionSetSpec,
    x: &[f64],
    cost: &CostSpec,
    percentiles: Option<&PercentileModel>,
    options: &ProblemOptions,
) -> Result<RecourseProblem> {
    let mut grid = build_action_grid(spec, x, model, options.default_grid_size)?;
    if options.prune_by_sign {
        grid = grid.prune_by_sign();
    }
    let table = cost.build_cost_table(&grid, percentiles)?;
    RecourseProblem::new(model, x, grid, table)?.with_margin(options.margin)
}
