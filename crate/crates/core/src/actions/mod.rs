//! Per-feature actionability rules and the discretized action grids built
//! from them for a single point.

mod percentile;

pub use percentile::{fit_percentiles, PercentileModel};

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};
use crate::model::LinearModel;

/// Grid size used for real-valued features that do not set `grid_size`.
pub const DEFAULT_GRID_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Real,
    Integer,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actionability {
    Fixed,
    Any,
    IncreaseOnly,
    DecreaseOnly,
}

impl Actionability {
    pub fn can_increase(self) -> bool {
        matches!(self, Actionability::Any | Actionability::IncreaseOnly)
    }

    pub fn can_decrease(self) -> bool {
        matches!(self, Actionability::Any | Actionability::DecreaseOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureActionSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub lb: f64,
    pub ub: f64,
    pub actionability: Actionability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_group: Option<String>,
}

impl FeatureActionSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind, lb: f64, ub: f64, actionability: Actionability) -> Self {
        FeatureActionSpec {
            name: name.into(),
            kind,
            lb,
            ub,
            actionability,
            grid_size: None,
            linked_group: None,
        }
    }

    pub fn binary(name: impl Into<String>, actionability: Actionability) -> Self {
        Self::new(name, FeatureKind::Binary, 0.0, 1.0, actionability)
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = Some(grid_size);
        self
    }

    pub fn in_group(mut self, group: impl Into<String>) -> Self {
        self.linked_group = Some(group.into());
        self
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(RecourseError::feature(&self.name, msg));
        if !self.lb.is_finite() || !self.ub.is_finite() {
            return err("bounds must be finite");
        }
        if self.lb > self.ub {
            return err("lower bound exceeds upper bound");
        }
        if self.kind == FeatureKind::Binary && (self.lb != 0.0 || self.ub != 1.0) {
            return err("binary features must have bounds [0, 1]");
        }
        if self.grid_size == Some(0) {
            return err("grid_size must be at least 1");
        }
        Ok(())
    }
}

/// Actionability rules for every feature of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSetSpec {
    features: Vec<FeatureActionSpec>,
}

impl ActionSetSpec {
    pub fn new(features: Vec<FeatureActionSpec>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for f in &features {
            f.validate()?;
            if seen.insert(f.name.as_str(), ()).is_some() {
                return Err(RecourseError::feature(&f.name, "listed twice in the action set"));
            }
        }
        let mut groups: BTreeMap<&str, Vec<&FeatureActionSpec>> = BTreeMap::new();
        for f in &features {
            if let Some(g) = &f.linked_group {
                groups.entry(g).or_default().push(f);
            }
        }
        for (group, members) in groups {
            if members.len() < 2 {
                return Err(RecourseError::input(format!(
                    "linked group `{group}` needs at least two features"
                )));
            }
            if let Some(f) = members.iter().find(|f| f.kind != FeatureKind::Binary) {
                return Err(RecourseError::feature(
                    &f.name,
                    format!("member of linked group `{group}` must be binary"),
                ));
            }
        }
        Ok(ActionSetSpec { features })
    }

    pub fn features(&self) -> &[FeatureActionSpec] {
        &self.features
    }

    pub fn get(&self, name: &str) -> Option<&FeatureActionSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Reorders the spec to follow the model's feature order. Every model
    /// feature must be listed and every listed feature must be in the model.
    pub fn aligned_to(&self, model: &LinearModel) -> Result<ActionSetSpec> {
        if let Some(f) = self.features.iter().find(|f| model.feature_index(&f.name).is_none()) {
            return Err(RecourseError::UnknownFeature(f.name.clone()));
        }
        let features = model
            .feature_names()
            .iter()
            .map(|name| {
                self.get(name)
                    .cloned()
                    .ok_or_else(|| RecourseError::MissingFeature(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ActionSetSpec { features })
    }

    /// Same spec with one feature's rules replaced.
    pub fn with_feature(&self, replacement: FeatureActionSpec) -> Result<ActionSetSpec> {
        let mut features = self.features.clone();
        match features.iter_mut().find(|f| f.name == replacement.name) {
            Some(slot) => *slot = replacement,
            None => return Err(RecourseError::UnknownFeature(replacement.name)),
        }
        ActionSetSpec::new(features)
    }

    /// Linked groups as lists of positions in this spec, in order of first
    /// appearance.
    pub fn linked_groups(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<&str> = Vec::new();
        let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (j, f) in self.features.iter().enumerate() {
            if let Some(g) = &f.linked_group {
                if !members.contains_key(g.as_str()) {
                    order.push(g);
                }
                members.entry(g).or_default().push(j);
            }
        }
        order
            .into_iter()
            .map(|g| members.remove(g).unwrap_or_default())
            .collect()
    }

    pub fn to_json(&self) -> String {
        crate::report::to_exact_json(self)
    }
}

pub fn load_action_set(reader: impl Read) -> Result<ActionSetSpec> {
    let features: Vec<FeatureActionSpec> = serde_json::from_reader(reader)
        .map_err(|e| RecourseError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    ActionSetSpec::new(features)
}

pub fn load_action_set_str(document: &str) -> Result<ActionSetSpec> {
    load_action_set(document.as_bytes())
}

/// Feasible actions for one feature at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureGrid {
    pub current: f64,
    /// Sorted ascending; always contains `0.0`.
    pub actions: Vec<f64>,
    /// `w_j * a` for every entry of `actions`.
    pub gains: Vec<f64>,
}

impl FeatureGrid {
    fn new(current: f64, mut actions: Vec<f64>, w: f64) -> Self {
        actions.push(0.0);
        actions.sort_by(f64::total_cmp);
        actions.dedup();
        let gains = actions.iter().map(|a| w * a).collect();
        FeatureGrid {
            current,
            actions,
            gains,
        }
    }

    pub fn zero_index(&self) -> usize {
        self.actions.iter().position(|a| *a == 0.0).unwrap_or(0)
    }

    pub fn is_actionable(&self) -> bool {
        self.actions.len() > 1
    }

    pub fn max_gain(&self) -> f64 {
        self.gains.iter().copied().fold(0.0, f64::max)
    }

    /// Largest spacing between consecutive reachable values.
    pub fn gap(&self) -> f64 {
        self.actions.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Discretized feasible actions `{a_jk}` for every feature of a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionGrid {
    pub features: Vec<FeatureGrid>,
    /// Sets of feature indices of which at most one may change.
    pub linked_groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationGap {
    pub per_feature: Vec<f64>,
    /// `sqrt(sum_j gap_j^2)`.
    pub total: f64,
}

impl ActionGrid {
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn point(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.current).collect()
    }

    pub fn discretization_gap(&self) -> DiscretizationGap {
        let per_feature: Vec<f64> = self.features.iter().map(FeatureGrid::gap).collect();
        let total = per_feature.iter().map(|d| d * d).sum::<f64>().sqrt();
        DiscretizationGap { per_feature, total }
    }

    /// Drops every action whose gain is not strictly positive, keeping `0`.
    pub fn prune_by_sign(&self) -> ActionGrid {
        let features = self
            .features
            .iter()
            .map(|f| {
                let (actions, gains) = f
                    .actions
                    .iter()
                    .zip(&f.gains)
                    .filter(|(a, g)| **a == 0.0 || **g > 0.0)
                    .map(|(a, g)| (*a, *g))
                    .unzip();
                FeatureGrid {
                    current: f.current,
                    actions,
                    gains,
                }
            })
            .collect();
        ActionGrid {
            features,
            linked_groups: self.linked_groups.clone(),
        }
    }

    /// Grid index of `a_j` for each feature, or `None` if `a` is off the grid.
    pub fn locate(&self, action: &[f64]) -> Option<Vec<usize>> {
        if action.len() != self.dim() {
            return None;
        }
        self.features
            .iter()
            .zip(action)
            .map(|(f, a)| f.actions.iter().position(|v| v == a))
            .collect()
    }
}

/// Builds the action grid for point `x`. `spec` must already be aligned to
/// `model`.
pub fn build_action_grid(
    spec: &ActionSetSpec,
    x: &[f64],
    model: &LinearModel,
    default_grid_size: usize,
) -> Result<ActionGrid> {
    model.check_point(x)?;
    if spec.features.len() != model.dim() {
        return Err(RecourseError::Dimension {
            expected: model.dim(),
            got: spec.features.len(),
        });
    }
    if default_grid_size == 0 {
        return Err(RecourseError::input("grid size must be at least 1"));
    }
    let features = spec
        .features
        .iter()
        .zip(x)
        .zip(model.coefficients())
        .enumerate()
        .map(|(j, ((f, &xj), &w))| {
            if f.name != model.feature_names()[j] {
                return Err(RecourseError::feature(
                    &f.name,
                    "action set is not aligned with the model",
                ));
            }
            feature_actions(f, xj, default_grid_size).map(|actions| FeatureGrid::new(xj, actions, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ActionGrid {
        features,
        linked_groups: spec.linked_groups(),
    })
}

fn feature_actions(f: &FeatureActionSpec, x: f64, default_grid_size: usize) -> Result<Vec<f64>> {
    if x < f.lb || x > f.ub {
        return Err(RecourseError::feature(
            &f.name,
            format!("value {x} lies outside [{}, {}]", f.lb, f.ub),
        ));
    }
    if f.kind != FeatureKind::Real && x.fract() != 0.0 {
        return Err(RecourseError::feature(&f.name, format!("value {x} is not an integer")));
    }
    if f.actionability == Actionability::Fixed {
        return Ok(vec![]);
    }
    let lo = if f.actionability.can_decrease() { f.lb } else { x };
    let hi = if f.actionability.can_increase() { f.ub } else { x };
    if lo == hi {
        return Ok(vec![]);
    }
    let actions = match f.kind {
        FeatureKind::Real => {
            let m = f.grid_size.unwrap_or(default_grid_size);
            let tiny = 1e-12 * (1.0 + x.abs());
            (0..=m)
                .map(|k| {
                    let v = if k == m {
                        hi
                    } else {
                        (lo + (hi - lo) * (k as f64 / m as f64)).clamp(lo, hi)
                    };
                    let a = v - x;
                    if a.abs() < tiny {
                        0.0
                    } else {
                        a
                    }
                })
                .collect()
        }
        FeatureKind::Integer | FeatureKind::Binary => {
            let (first, last) = (lo.ceil() as i64, hi.floor() as i64);
            (first..=last).map(|v| v as f64 - x).collect()
        }
    };
    Ok(actions)
}
