//! Flipsets: minimal-cost actions with pairwise distinct supports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::actions::{ActionSetSpec, Actionability, PercentileModel};
use crate::costs::CostSpec;
use crate::error::{RecourseError, Result};
use crate::model::LinearModel;
use crate::report::{round_sig12, to_stable_json};
use crate::solver::{problem_for_point, solve, ProblemOptions, RecourseProblem, SolveStatus, FLIP_SLACK};

/// Passed as `max_items` to enumerate every flip-capable support.
pub const ALL_ITEMS: usize = usize::MAX;

const CAVEAT: &str = "These are the cheapest changes found for this model with distinct sets of \
features; the list is not exhaustive unless marked so, and it only describes how this model \
scores the changed values.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Change {
    pub feature: String,
    pub current: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipsetItem {
    pub changes: Vec<Change>,
    pub cost: f64,
    /// Indices of the changed features.
    #[serde(skip)]
    pub support: Vec<usize>,
    /// Full action vector.
    #[serde(skip)]
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flipset {
    pub items: Vec<FlipsetItem>,
    /// Enumeration stopped because no further support admits a flip.
    pub exhausted: bool,
}

impl Flipset {
    /// No action at all can flip the prediction.
    pub fn is_certified_empty(&self) -> bool {
        self.items.is_empty() && self.exhausted
    }
}

/// Repeatedly solves `problem`, forbidding each optimal support in turn,
/// until `max_items` items are found or no flipping action remains. Item
/// costs are nondecreasing.
pub fn enumerate_actions(problem: &RecourseProblem, max_items: usize) -> Result<Flipset> {
    if max_items == 0 {
        return Err(RecourseError::input("a flipset needs at least one item"));
    }
    if problem.score() >= problem.margin() - FLIP_SLACK {
        return Err(RecourseError::NoRecourseNeeded {
            score: problem.score(),
            margin: problem.margin(),
        });
    }
    let names = problem.model().feature_names();
    let x = problem.point();
    let mut problem = problem.clone();
    let mut items = Vec::new();
    while items.len() < max_items {
        let solution = solve(&problem);
        match (solution.status, solution.action, solution.cost) {
            (SolveStatus::Optimal, Some(action), Some(cost)) => {
                let changes = solution
                    .support
                    .iter()
                    .map(|&j| Change {
                        feature: names[j].clone(),
                        current: x[j],
                        required: x[j] + action[j],
                    })
                    .collect();
                problem.exclude_support(&solution.support)?;
                items.push(FlipsetItem {
                    changes,
                    cost,
                    support: solution.support,
                    action,
                });
            }
            (SolveStatus::Infeasible, _, _) => return Ok(Flipset { items, exhausted: true }),
            (status, _, _) => {
                return Err(RecourseError::Internal(format!(
                    "unexpected solver status {status:?} while enumerating"
                )))
            }
        }
    }
    Ok(Flipset {
        items,
        exhausted: false,
    })
}

/// Flipset rendered for people (fixed-width table) and programs (JSON).
#[derive(Debug, Clone, PartialEq)]
pub struct FlipsetDocument {
    pub text: String,
    pub json: String,
    pub caveat: String,
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    items: &'a [FlipsetItem],
    exhausted: bool,
    caveat: &'a str,
}

fn fmt_value(v: f64) -> String {
    let v = round_sig12(v);
    if v == 0.0 {
        "0".to_string()
    } else {
        v.to_string()
    }
}

/// Renders `flipset` after checking that every item really flips the
/// prediction of `model` at `x` by at least `margin`.
pub fn render_flipset(flipset: &Flipset, model: &LinearModel, x: &[f64], margin: f64) -> Result<FlipsetDocument> {
    for (i, item) in flipset.items.iter().enumerate() {
        let mut moved = x.to_vec();
        for c in &item.changes {
            let j = model
                .feature_index(&c.feature)
                .ok_or_else(|| RecourseError::UnknownFeature(c.feature.clone()))?;
            moved[j] = c.required;
        }
        let score = model.score(&moved)?;
        if score < margin - FLIP_SLACK {
            return Err(RecourseError::Internal(format!(
                "flipset item {} reaches score {score}, below the margin {margin}",
                i + 1
            )));
        }
    }

    let json = to_stable_json(&JsonDocument {
        items: &flipset.items,
        exhausted: flipset.exhausted,
        caveat: CAVEAT,
    });

    let mut text = String::new();
    if flipset.items.is_empty() {
        if flipset.exhausted {
            text.push_str("No actionable recourse: no change allowed by the action set flips the prediction.\n");
            text.push_str("This is certified by exhaustive search over the action grid.\n");
        } else {
            text.push_str("No items.\n");
        }
        return Ok(FlipsetDocument {
            text,
            json,
            caveat: CAVEAT.to_string(),
        });
    }

    let headers = ["Features to Change", "Current Values", "Required Values"];
    let rows: Vec<Vec<(String, String, String)>> = flipset
        .items
        .iter()
        .map(|item| {
            item.changes
                .iter()
                .map(|c| (c.feature.clone(), fmt_value(c.current), fmt_value(c.required)))
                .collect()
        })
        .collect();
    let all = rows.iter().flatten();
    let w1 = all
        .clone()
        .map(|r| r.0.len())
        .chain([headers[0].len()])
        .max()
        .unwrap_or(0);
    let w2 = all
        .clone()
        .map(|r| r.1.len())
        .chain([headers[1].len()])
        .max()
        .unwrap_or(0);
    let w3 = all.map(|r| r.2.len()).chain([headers[2].len()]).max().unwrap_or(0);
    let width = w1 + 2 + w2 + 4 + w3;

    let _ = writeln!(text, "{:<w1$}  {:<w2$}    {}", headers[0], headers[1], headers[2]);
    let _ = writeln!(text, "{}", "=".repeat(width));
    for (i, (item, block)) in flipset.items.iter().zip(&rows).enumerate() {
        if i > 0 {
            let _ = writeln!(text, "{}", "-".repeat(width));
        }
        for (name, current, required) in block {
            let _ = writeln!(text, "{name:<w1$}  {current:<w2$} -> {required}");
        }
        let _ = writeln!(text, "cost: {}", fmt_value(item.cost));
    }
    let _ = writeln!(text, "{}", "=".repeat(width));
    if flipset.exhausted {
        let _ = writeln!(text, "All {} flipping feature sets are listed.", flipset.items.len());
    } else {
        let _ = writeln!(text, "Showing {} items; more may exist.", flipset.items.len());
    }
    Ok(FlipsetDocument {
        text,
        json,
        caveat: CAVEAT.to_string(),
    })
}

/// Per-request edit of one feature's rules.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOverride {
    #[serde(default)]
    pub actionability: Option<Actionability>,
    #[serde(default)]
    pub lb: Option<f64>,
    #[serde(default)]
    pub ub: Option<f64>,
}

/// Copy of `spec` with the overrides applied.
pub fn apply_overrides(spec: &ActionSetSpec, overrides: &BTreeMap<String, FeatureOverride>) -> Result<ActionSetSpec> {
    let mut spec = spec.clone();
    for (name, o) in overrides {
        let mut f = spec
            .get(name)
            .cloned()
            .ok_or_else(|| RecourseError::UnknownFeature(name.clone()))?;
        if let Some(a) = o.actionability {
            f.actionability = a;
        }
        if let Some(lb) = o.lb {
            f.lb = lb;
        }
        if let Some(ub) = o.ub {
            f.ub = ub;
        }
        spec = spec.with_feature(f)?;
    }
    Ok(spec)
}

/// Everything needed to produce a flipset for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipsetRequest {
    /// Point in model feature order.
    pub x: Vec<f64>,
    pub overrides: BTreeMap<String, FeatureOverride>,
    pub cost: CostSpec,
    pub max_items: usize,
    pub options: ProblemOptions,
}

/// Builds the problem for `request.x` under the overridden spec,
/// enumerates and renders. Shared by the command line and the service so
/// both produce identical documents.
pub fn flipset_for_point(
    model: &LinearModel,
    spec: &ActionSetSpec,
    percentiles: Option<&PercentileModel>,
    request: &FlipsetRequest,
) -> Result<(Flipset, FlipsetDocument)> {
    let spec = apply_overrides(spec, &request.overrides)?.aligned_to(model)?;
    let percentiles = match percentiles {
        Some(p) => Some(p.select(model.feature_names())?),
        None if request.cost.variant.is_percentile() => {
            return Err(RecourseError::input(format!(
                "cost `{}` needs a population to fit percentiles",
                request.cost.variant
            )))
        }
        None => None,
    };
    let problem = problem_for_point(
        model,
        &spec,
        &request.x,
        &request.cost,
        percentiles.as_ref(),
        &request.options,
    )?;
    let flipset = enumerate_actions(&problem, request.max_items)?;
    let document = render_flipset(&flipset, model, &request.x, request.options.margin)?;
    Ok((flipset, document))
}
