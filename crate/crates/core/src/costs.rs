//! Cost functions over actions and the per-action cost tables fed to the
//! solver.
//!
//! The percentile costs compare `Q_j(x_j)` with `Q_j(x_j + a_j)` under the
//! target population's empirical CDF:
//!
//! * maximum percentile shift: `max_j |Q_j(x_j + a_j) - Q_j(x_j)|`
//! * total log-percentile shift: `sum_j |log((1 - Q_j(x_j + a_j)) / (1 - Q_j(x_j)))|`
//!
//! The log cost takes the absolute value per feature so that it is
//! nonnegative and grows in both directions. Where `1 - Q = 0` (at or above
//! the sample maximum) the value `1 / (2n)` is substituted, keeping costs
//! finite while still penalising moves near the top of the population.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actions::{ActionGrid, PercentileModel};
use crate::error::{RecourseError, Result};
use crate::model::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum CostVariant {
    TotalLogPercentile,
    MaxPercentileShift,
    WeightedLinear,
    /// `scale * ||a||_2`; not separable, so only the brute-force oracle and
    /// the closed-form cost accept it.
    ScaledNorm {
        scale: f64,
    },
}

impl CostVariant {
    pub fn is_percentile(self) -> bool {
        matches!(self, CostVariant::TotalLogPercentile | CostVariant::MaxPercentileShift)
    }

    pub fn flag(self) -> &'static str {
        match self {
            CostVariant::TotalLogPercentile => "total_log_pct",
            CostVariant::MaxPercentileShift => "max_pct",
            CostVariant::WeightedLinear => "linear",
            CostVariant::ScaledNorm { .. } => "l2",
        }
    }
}

impl FromStr for CostVariant {
    type Err = RecourseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total_log_pct" => Ok(CostVariant::TotalLogPercentile),
            "max_pct" => Ok(CostVariant::MaxPercentileShift),
            "linear" => Ok(CostVariant::WeightedLinear),
            "l2" => Ok(CostVariant::ScaledNorm { scale: 1.0 }),
            other => Err(RecourseError::input(format!(
                "unknown cost `{other}` (expected max_pct, total_log_pct, linear or l2)"
            ))),
        }
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

/// How the solver combines per-feature costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SeparableSum,
    Minimax,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSpec {
    #[serde(flatten)]
    pub variant: CostVariant,
    /// Optional positive multiplier per feature (the `u_j` of the linear cost).
    pub weights: Option<Vec<f64>>,
}

impl CostSpec {
    pub fn new(variant: CostVariant) -> Self {
        CostSpec { variant, weights: None }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(RecourseError::input(format!(
                "cost weight {w} must be strictly positive"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Reads weights from a `{feature: weight}` map; unlisted features get 1.
    pub fn with_named_weights(self, model: &LinearModel, weights: &BTreeMap<String, f64>) -> Result<Self> {
        let mut w = vec![1.0; model.dim()];
        for (name, value) in weights {
            let j = model
                .feature_index(name)
                .ok_or_else(|| RecourseError::UnknownFeature(name.clone()))?;
            w[j] = *value;
        }
        self.with_weights(w)
    }

    pub fn objective(&self) -> Option<Objective> {
        match self.variant {
            CostVariant::MaxPercentileShift => Some(Objective::Minimax),
            CostVariant::TotalLogPercentile | CostVariant::WeightedLinear => Some(Objective::SeparableSum),
            CostVariant::ScaledNorm { .. } => None,
        }
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    fn check_inputs(&self, d: usize, percentiles: Option<&PercentileModel>) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != d {
                return Err(RecourseError::Dimension {
                    expected: d,
                    got: w.len(),
                });
            }
        }
        if self.variant.is_percentile() {
            let q = percentiles.ok_or_else(|| {
                RecourseError::input(format!(
                    "cost `{}` needs a percentile model of the target population",
                    self.variant
                ))
            })?;
            if q.dim() != d {
                return Err(RecourseError::Dimension {
                    expected: d,
                    got: q.dim(),
                });
            }
        }
        Ok(())
    }

    /// Contribution of moving feature `j` from `x` to `x + a`. Not defined for
    /// the scaled norm, whose per-feature term is `|a|` before the root.
    fn feature_cost(&self, j: usize, x: f64, a: f64, percentiles: Option<&PercentileModel>) -> f64 {
        if a == 0.0 {
            return 0.0;
        }
        let u = self.weight(j);
        match (self.variant, percentiles) {
            (CostVariant::MaxPercentileShift, Some(q)) => u * (q.cdf(j, x + a) - q.cdf(j, x)).abs(),
            (CostVariant::TotalLogPercentile, Some(q)) => {
                let floor = 1.0 / (2.0 * q.sample_size(j) as f64);
                let tail = |v: f64| {
                    let t = 1.0 - q.cdf(j, v);
                    if t <= 0.0 {
                        floor
                    } else {
                        t
                    }
                };
                u * (tail(x + a) / tail(x)).ln().abs()
            }
            (CostVariant::WeightedLinear, _) => u * a.abs(),
            (CostVariant::ScaledNorm { .. }, _) => u * a.abs(),
            (_, None) => f64::NAN,
        }
    }

    /// Cost of action `a` from point `x`.
    pub fn action_cost(&self, x: &[f64], a: &[f64], percentiles: Option<&PercentileModel>) -> Result<f64> {
        let d = x.len();
        if a.len() != d {
            return Err(RecourseError::Dimension {
                expected: d,
                got: a.len(),
            });
        }
        if a.iter().chain(x).any(|v| !v.is_finite()) {
            return Err(RecourseError::input("action and point must be finite"));
        }
        self.check_inputs(d, percentiles)?;
        let terms = (0..d).map(|j| self.feature_cost(j, x[j], a[j], percentiles));
        Ok(match self.variant {
            CostVariant::MaxPercentileShift => terms.fold(0.0, f64::max),
            CostVariant::TotalLogPercentile | CostVariant::WeightedLinear => terms.sum(),
            CostVariant::ScaledNorm { scale } => scale * terms.map(|t| t * t).sum::<f64>().sqrt(),
        })
    }

    /// Like [`CostSpec::action_cost`] but rejects actions that are not on `grid`.
    pub fn grid_action_cost(&self, grid: &ActionGrid, a: &[f64], percentiles: Option<&PercentileModel>) -> Result<f64> {
        if grid.locate(a).is_none() {
            return Err(RecourseError::input("action is not in the feasible action set"));
        }
        self.action_cost(&grid.point(), a, percentiles)
    }

    /// Precomputes `c_jk` for every action on `grid`.
    pub fn build_cost_table(&self, grid: &ActionGrid, percentiles: Option<&PercentileModel>) -> Result<CostTable> {
        let objective = self.objective().ok_or_else(|| {
            RecourseError::input(format!(
                "cost `{}` is not separable; use the brute-force oracle",
                self.variant
            ))
        })?;
        self.check_inputs(grid.dim(), percentiles)?;
        let costs = grid
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.actions
                    .iter()
                    .map(|a| self.feature_cost(j, f.current, *a, percentiles))
                    .collect()
            })
            .collect();
        Ok(CostTable { costs, objective })
    }
}

/// `c_jk` for every grid action, plus how the solver should combine them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTable {
    pub costs: Vec<Vec<f64>>,
    pub objective: Objective,
}

impl CostTable {
    pub fn new(costs: Vec<Vec<f64>>, objective: Objective) -> Self {
        CostTable { costs, objective }
    }

    /// Cost of an on-grid action under the table's objective.
    pub fn evaluate(&self, grid: &ActionGrid, a: &[f64]) -> Option<f64> {
        let index = grid.locate(a)?;
        let terms = index.iter().enumerate().map(|(j, &k)| self.costs[j][k]);
        Some(match self.objective {
            Objective::SeparableSum => terms.sum(),
            Objective::Minimax => terms.fold(0.0, f64::max),
        })
    }
}
