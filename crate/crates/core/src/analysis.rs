//! Population-level analysis: the expected-cost bound, recourse screens,
//! discretization error and group disparities.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::actions::{build_action_grid, ActionSetSpec, Actionability, FeatureKind};
use crate::audit::{AuditRecord, RecordStatus};
use crate::costs::{CostSpec, CostVariant};
use crate::error::{RecourseError, Result};
use crate::model::{Dataset, LinearModel};
use crate::report::Quantiles;
use crate::solver::{brute_force_solve, closed_form_cost, unit_score_parts, RecourseProblem, SolveStatus};

/// Plug-in estimate of an upper bound on the mean minimal `c_x * ||a||_2`
/// recourse cost over the negatively predicted points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecourseBound {
    pub n_negative: usize,
    /// Share of positive labels among negative predictions (false omission rate).
    pub p_plus: f64,
    /// Share of negative labels among negative predictions.
    pub p_minus: f64,
    /// Mean `c_x u_x` over negative predictions labelled +1.
    pub gamma_plus: f64,
    /// Mean `-c_x u_x` over negative predictions labelled -1.
    pub gamma_minus: f64,
    /// Max `|c_x u_x|` over negative predictions.
    pub gamma_max: f64,
    /// Probability that the actionable part of the score disagrees with the label.
    pub internal_risk: f64,
    pub bound: f64,
    /// `u_x = w_A . x_A / ||w_A||^2` per negative prediction, in row order.
    pub unit_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    pub empirical_mean: f64,
    pub bound: f64,
}

/// Negatively predicted rows in model feature order, with their labels.
fn negative_points(model: &LinearModel, data: &Dataset) -> Result<Vec<(Vec<f64>, i8)>> {
    let labels = data
        .labels()
        .ok_or_else(|| RecourseError::input("the bound needs labelled data"))?;
    let aligned = data.aligned_to(model)?;
    let mut out = Vec::new();
    for (x, &label) in aligned.rows().iter().zip(labels) {
        if !model.predict(x)?.is_positive() {
            out.push((x.clone(), label));
        }
    }
    if out.is_empty() {
        return Err(RecourseError::input("no point is predicted negative"));
    }
    Ok(out)
}

/// Mask of features whose rules allow any change.
pub fn actionable_mask(model: &LinearModel, spec: &ActionSetSpec) -> Result<Vec<bool>> {
    let spec = spec.aligned_to(model)?;
    Ok(spec
        .features()
        .iter()
        .map(|f| f.actionability != Actionability::Fixed && f.lb < f.ub)
        .collect())
}

struct Sample {
    /// `c_x u_x` per negative prediction.
    scaled: Vec<f64>,
    unit: Vec<f64>,
    labels: Vec<i8>,
}

fn sample(model: &LinearModel, data: &Dataset, actionable: &[bool], c_x: &dyn Fn(&[f64]) -> f64) -> Result<Sample> {
    if actionable.len() != model.dim() {
        return Err(RecourseError::Dimension {
            expected: model.dim(),
            got: actionable.len(),
        });
    }
    let mut s = Sample {
        scaled: vec![],
        unit: vec![],
        labels: vec![],
    };
    for (x, label) in negative_points(model, data)? {
        let (dot, norm2) = unit_score_parts(model, &x, actionable);
        if norm2 == 0.0 {
            return Err(RecourseError::input("actionable coefficients are all zero"));
        }
        let c = c_x(&x);
        if !(c.is_finite() && c > 0.0) {
            return Err(RecourseError::input(format!(
                "scaling function returned {c}; it must be positive"
            )));
        }
        let u = dot / norm2;
        s.unit.push(u);
        s.scaled.push(c * u);
        s.labels.push(label);
    }
    Ok(s)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Estimates the bound from a labelled sample. `c_x` maps a point (model
/// feature order) to its positive cost scale; pass `|_| 1.0` for the
/// unscaled norm.
pub fn expected_cost_bound(
    model: &LinearModel,
    data: &Dataset,
    actionable: &[bool],
    c_x: &dyn Fn(&[f64]) -> f64,
) -> Result<RecourseBound> {
    let s = sample(model, data, actionable, c_x)?;
    let n = s.labels.len() as f64;
    let pos: Vec<usize> = (0..s.labels.len()).filter(|&i| s.labels[i] > 0).collect();
    let neg: Vec<usize> = (0..s.labels.len()).filter(|&i| s.labels[i] < 0).collect();
    let p_plus = pos.len() as f64 / n;
    let p_minus = neg.len() as f64 / n;
    let gamma_plus = mean(pos.iter().map(|&i| s.scaled[i]));
    let gamma_minus = mean(neg.iter().map(|&i| -s.scaled[i]));
    let gamma_max = s.scaled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // misalignment rates within each label cell; empty cells weigh 0
    let share = |idx: &[usize], bad: &dyn Fn(f64) -> bool| {
        if idx.is_empty() {
            0.0
        } else {
            idx.iter().filter(|&&i| bad(s.unit[i])).count() as f64 / idx.len() as f64
        }
    };
    let internal_risk = p_plus * share(&pos, &|u| u <= 0.0) + p_minus * share(&neg, &|u| u >= 0.0);
    let bound = p_plus * gamma_plus + p_minus * gamma_minus + 2.0 * gamma_max * internal_risk;
    Ok(RecourseBound {
        n_negative: s.labels.len(),
        p_plus,
        p_minus,
        gamma_plus,
        gamma_minus,
        gamma_max,
        internal_risk,
        bound,
        unit_scores: s.unit,
    })
}

/// Compares the mean closed-form cost over negative predictions with the
/// bound.
pub fn verify_bound(
    model: &LinearModel,
    data: &Dataset,
    actionable: &[bool],
    c_x: &dyn Fn(&[f64]) -> f64,
) -> Result<BoundCheck> {
    let bound = expected_cost_bound(model, data, actionable, c_x)?;
    let mut costs = Vec::with_capacity(bound.n_negative);
    for (x, _) in negative_points(model, data)? {
        costs.push(closed_form_cost(model, &x, actionable, c_x(&x))?);
    }
    let empirical_mean = mean(costs.into_iter());
    Ok(BoundCheck {
        holds: empirical_mean <= bound.bound + 1e-9,
        empirical_mean,
        bound: bound.bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    GuaranteedAll,
    GuaranteedNone,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeCheck {
    pub verdict: Guarantee,
    /// Score range over the feature box.
    pub min_score: f64,
    pub max_score: f64,
    pub reasons: Vec<String>,
}

/// Smallest and largest value a feature can take inside its bounds.
fn feature_range(kind: FeatureKind, lb: f64, ub: f64) -> Option<(f64, f64)> {
    match kind {
        FeatureKind::Real => Some((lb, ub)),
        FeatureKind::Integer | FeatureKind::Binary => {
            let (lo, hi) = (lb.ceil(), ub.floor());
            (lo <= hi).then_some((lo, hi))
        }
    }
}

/// Decides from the model and the action set alone whether every point,
/// no point, or only some points in the feature box have recourse.
pub fn recourse_guarantee_check(model: &LinearModel, spec: &ActionSetSpec) -> Result<GuaranteeCheck> {
    let spec = spec.aligned_to(model)?;
    let mut min_score = model.intercept();
    let mut max_score = model.intercept();
    let mut reasons = Vec::new();
    let mut all_free = true;
    let mut any_movable = false;
    for (f, &w) in spec.features().iter().zip(model.coefficients()) {
        if w == 0.0 {
            continue;
        }
        let Some((lo, hi)) = feature_range(f.kind, f.lb, f.ub) else {
            return Err(RecourseError::feature(&f.name, "bounds contain no valid value"));
        };
        min_score += (w * lo).min(w * hi);
        max_score += (w * lo).max(w * hi);
        let movable = f.actionability != Actionability::Fixed && lo < hi;
        any_movable |= movable;
        if f.actionability != Actionability::Any || lo >= hi {
            all_free = false;
            reasons.push(format!(
                "feature `{}` has a nonzero coefficient but cannot move freely in both directions",
                f.name
            ));
        } else if f.linked_group.is_some() {
            all_free = false;
            reasons.push(format!(
                "feature `{}` is linked to other features, which restricts joint changes",
                f.name
            ));
        }
    }
    let verdict = if !any_movable {
        reasons.push("no feature with a nonzero coefficient can change".into());
        Guarantee::GuaranteedNone
    } else if max_score < 0.0 {
        reasons.push(format!(
            "the largest achievable score {max_score} is negative: nobody can be approved"
        ));
        Guarantee::GuaranteedNone
    } else if min_score >= 0.0 {
        reasons.push(format!(
            "the smallest achievable score {min_score} is nonnegative: nobody is denied"
        ));
        Guarantee::GuaranteedNone
    } else if all_free {
        reasons.push(
            "every feature the model uses is freely actionable and the model predicts both classes over the box".into(),
        );
        Guarantee::GuaranteedAll
    } else {
        reasons.push("restricted features may block recourse for some points; an audit is needed".into());
        Guarantee::Indeterminate
    };
    Ok(GuaranteeCheck {
        verdict,
        min_score,
        max_score,
        reasons,
    })
}

/// One instance for [`discretization_error_report`].
#[derive(Debug, Clone)]
pub struct DiscretizationInstance {
    pub model: LinearModel,
    pub spec: ActionSetSpec,
    pub x: Vec<f64>,
    pub c_x: f64,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationRecord {
    pub grid_cost: f64,
    pub continuous_cost: f64,
    pub gap: f64,
    /// `c_x * Delta` with `Delta` the Euclidean norm of the per-feature grid spacing.
    pub bound: f64,
    pub within_bound: bool,
}

/// Compares the best `c_x * ||a||_2` on the endpoint grid with the
/// continuous optimum `c_x |score| / ||w||` for each instance. Features
/// should be real-valued and freely actionable with boxes wide enough to
/// contain the continuous optimum.
pub fn discretization_error_report(instances: &[DiscretizationInstance]) -> Result<Vec<DiscretizationRecord>> {
    instances
        .iter()
        .map(|inst| {
            let spec = inst.spec.aligned_to(&inst.model)?;
            let grid = build_action_grid(&spec, &inst.x, &inst.model, inst.grid_size)?;
            let gap = grid.discretization_gap();
            let cost = CostSpec::new(CostVariant::ScaledNorm { scale: inst.c_x });
            let zeros = grid.features.iter().map(|f| vec![0.0; f.actions.len()]).collect();
            let table = crate::costs::CostTable::new(zeros, crate::costs::Objective::SeparableSum);
            let problem = RecourseProblem::new(&inst.model, &inst.x, grid, table)?;
            let solution = brute_force_solve(&problem, &|a| {
                cost.action_cost(&inst.x, a, None).unwrap_or(f64::INFINITY)
            })?;
            if solution.status == SolveStatus::Infeasible {
                return Err(RecourseError::input("the grid admits no flipping action"));
            }
            let grid_cost = solution.cost.unwrap_or(0.0);
            // the classifier is unchanged by positive rescaling; a unit-norm
            // coefficient vector makes the closed form the Euclidean distance
            let norm = inst.model.coefficients().iter().map(|w| w * w).sum::<f64>().sqrt();
            let unit = inst.model.scaled(1.0 / norm)?;
            let continuous_cost = closed_form_cost(&unit, &inst.x, &vec![true; unit.dim()], inst.c_x)?;
            let bound = inst.c_x * gap.total;
            Ok(DiscretizationRecord {
                grid_cost,
                continuous_cost,
                gap: grid_cost - continuous_cost,
                bound,
                within_bound: grid_cost - continuous_cost <= bound + 1e-9,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    None,
    ByLabelAndScoreBand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub n_audited: usize,
    pub n_optimal: usize,
    pub feasibility_rate: Option<f64>,
    pub cost_quantiles: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub label: i8,
    /// Score decile among audited rows, 0 = lowest.
    pub band: usize,
    pub groups: Vec<GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityReport {
    pub matching: Matching,
    pub groups: Vec<GroupStats>,
    /// Per-cell statistics when matching by label and score band.
    pub cells: Vec<CellStats>,
    /// Per-group statistics over cells where every group is present.
    pub pooled: Vec<GroupStats>,
}

fn group_stats(group: &str, records: &[&AuditRecord]) -> GroupStats {
    let n_optimal = records.iter().filter(|r| r.status == RecordStatus::Optimal).count();
    let costs: Vec<f64> = records.iter().filter_map(|r| r.cost).collect();
    GroupStats {
        group: group.to_string(),
        n_audited: records.len(),
        n_optimal,
        feasibility_rate: (!records.is_empty()).then(|| n_optimal as f64 / records.len() as f64),
        cost_quantiles: Quantiles::of(&costs),
    }
}

/// Compares feasibility and cost across groups. `groups[row]` and
/// `labels[row]` are indexed by audit row; labels are only needed for
/// matching.
pub fn disparity_report(
    records: &[AuditRecord],
    groups: &[String],
    labels: Option<&[i8]>,
    matching: Matching,
) -> Result<DisparityReport> {
    let rows = records.iter().map(|r| r.row).max().map_or(0, |m| m + 1);
    if groups.len() < rows {
        return Err(RecourseError::input(format!(
            "group assignment covers {} rows, the audit has {rows}",
            groups.len()
        )));
    }
    let names: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    let audited: Vec<&AuditRecord> = records
        .iter()
        .filter(|r| r.status != RecordStatus::SkippedPositive)
        .collect();
    let by_group = |subset: &[&AuditRecord]| -> Vec<GroupStats> {
        names
            .iter()
            .map(|g| {
                let members: Vec<&AuditRecord> = subset.iter().copied().filter(|r| groups[r.row] == *g).collect();
                group_stats(g, &members)
            })
            .collect()
    };
    let overall = by_group(&audited);
    if matching == Matching::None {
        return Ok(DisparityReport {
            matching,
            groups: overall,
            cells: vec![],
            pooled: vec![],
        });
    }

    let labels = labels.ok_or_else(|| RecourseError::input("matching by label needs labelled data"))?;
    if labels.len() < rows {
        return Err(RecourseError::input(format!(
            "labels cover {} rows, the audit has {rows}",
            labels.len()
        )));
    }
    // deciles of score among audited rows, ties broken by row
    let mut order: Vec<&AuditRecord> = audited.clone();
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.row.cmp(&b.row)));
    let n = order.len();
    let mut band_of = BTreeMap::new();
    for (rank, r) in order.iter().enumerate() {
        band_of.insert(r.row, rank * 10 / n);
    }
    let mut cells: BTreeMap<(i8, usize), Vec<&AuditRecord>> = BTreeMap::new();
    for r in &audited {
        cells.entry((labels[r.row], band_of[&r.row])).or_default().push(r);
    }
    let mut cell_stats = Vec::new();
    let mut comparable: Vec<&AuditRecord> = Vec::new();
    for ((label, band), members) in &cells {
        let stats = by_group(members);
        if stats.iter().all(|s| s.n_audited > 0) {
            comparable.extend(members.iter().copied());
        }
        cell_stats.push(CellStats {
            label: *label,
            band: *band,
            groups: stats,
        });
    }
    comparable.sort_by_key(|r| r.row);
    Ok(DisparityReport {
        matching,
        groups: overall,
        cells: cell_stats,
        pooled: by_group(&comparable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::FeatureActionSpec;
    use std::time::Duration;

    fn labelled(rows: Vec<Vec<f64>>, labels: Vec<i8>) -> Dataset {
        let d = rows[0].len();
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        Dataset::new(names, rows, Some(labels)).unwrap()
    }

    #[test]
    fn label_shares_and_single_point_terms() {
        let model = LinearModel::from_coefficients(vec![3.0, 4.0], 0.0).unwrap();
        let data = labelled(vec![vec![-1.0, -0.5]], vec![1]);
        let b = expected_cost_bound(&model, &data, &[true, true], &|_| 1.0).unwrap();
        assert!((b.gamma_plus + 0.2).abs() < 1e-15);
        assert!((b.gamma_max - 0.2).abs() < 1e-15);
        assert_eq!((b.p_plus, b.p_minus), (1.0, 0.0));

        let data = labelled(vec![vec![-1.0, 0.0]; 4], vec![1, -1, -1, 1]);
        let b = expected_cost_bound(&model, &data, &[true, true], &|_| 1.0).unwrap();
        assert_eq!((b.p_plus, b.p_minus), (0.5, 0.5));
    }

    #[test]
    fn maximal_misalignment() {
        // positives strictly negative in the actionable part, negatives
        // positive in it but pushed below zero by a fixed feature
        let model = LinearModel::from_coefficients(vec![1.0, 1.0], 0.0).unwrap();
        let data = labelled(vec![vec![-1.0, 0.0], vec![-2.0, 0.0], vec![1.0, -5.0]], vec![1, 1, -1]);
        let b = expected_cost_bound(&model, &data, &[true, false], &|_| 1.0).unwrap();
        assert_eq!(b.internal_risk, 1.0);
    }

    #[test]
    fn one_empty_cell_gives_equality() {
        let model = LinearModel::from_coefficients(vec![1.0, -2.0], 0.0).unwrap();
        let data = labelled(vec![vec![-1.0, 0.5], vec![-0.5, 0.0], vec![0.0, 2.0]], vec![-1, -1, -1]);
        let b = expected_cost_bound(&model, &data, &[true, true], &|_| 1.0).unwrap();
        assert_eq!(b.internal_risk, 0.0);
        let check = verify_bound(&model, &data, &[true, true], &|_| 1.0).unwrap();
        assert!(check.holds);
        assert!((check.empirical_mean - b.gamma_minus).abs() < 1e-15);
    }

    #[test]
    fn bound_inputs_are_validated() {
        let model = LinearModel::from_coefficients(vec![1.0], 0.0).unwrap();
        let positive_only = labelled(vec![vec![1.0]], vec![1]);
        assert!(expected_cost_bound(&model, &positive_only, &[true], &|_| 1.0).is_err());
        let unlabelled = Dataset::new(vec!["x1".into()], vec![vec![-1.0]], None).unwrap();
        assert!(expected_cost_bound(&model, &unlabelled, &[true], &|_| 1.0).is_err());
        let data = labelled(vec![vec![-1.0]], vec![1]);
        assert!(expected_cost_bound(&model, &data, &[false], &|_| 1.0).is_err());
    }

    #[test]
    fn unit_scores_scale_inversely_with_weights() {
        let model = LinearModel::from_coefficients(vec![1.0, 2.0], 0.5).unwrap();
        let data = labelled(vec![vec![-1.0, -1.0], vec![-3.0, 0.5]], vec![1, -1]);
        let a = expected_cost_bound(&model, &data, &[true, true], &|_| 1.0).unwrap();
        let b = expected_cost_bound(&model.scaled(4.0).unwrap(), &data, &[true, true], &|_| 1.0).unwrap();
        for (u, v) in a.unit_scores.iter().zip(&b.unit_scores) {
            assert!((u / 4.0 - v).abs() < 1e-15);
        }
    }

    fn spec(features: Vec<FeatureActionSpec>) -> ActionSetSpec {
        ActionSetSpec::new(features).unwrap()
    }

    #[test]
    fn guarantee_verdicts() {
        let model = LinearModel::from_coefficients(vec![1.0, 1.0], -1.0).unwrap();
        let free = spec(vec![
            FeatureActionSpec::new("x1", FeatureKind::Real, -2.0, 2.0, Actionability::Any),
            FeatureActionSpec::new("x2", FeatureKind::Real, -2.0, 2.0, Actionability::Any),
        ]);
        assert_eq!(
            recourse_guarantee_check(&model, &free).unwrap().verdict,
            Guarantee::GuaranteedAll
        );

        let fixed = spec(vec![
            FeatureActionSpec::new("x1", FeatureKind::Real, -2.0, 2.0, Actionability::Fixed),
            FeatureActionSpec::new("x2", FeatureKind::Real, -2.0, 2.0, Actionability::Fixed),
        ]);
        assert_eq!(
            recourse_guarantee_check(&model, &fixed).unwrap().verdict,
            Guarantee::GuaranteedNone
        );

        let immutable_binary = LinearModel::from_coefficients(vec![1.0, 1.0, 1.0], -2.5).unwrap();
        let s = spec(vec![
            FeatureActionSpec::binary("x1", Actionability::Fixed),
            FeatureActionSpec::binary("x2", Actionability::Any),
            FeatureActionSpec::binary("x3", Actionability::Any),
        ]);
        let check = recourse_guarantee_check(&immutable_binary, &s).unwrap();
        assert_eq!(check.verdict, Guarantee::Indeterminate);
        assert_eq!((check.min_score, check.max_score), (-2.5, 0.5));

        let unreachable = LinearModel::from_coefficients(vec![1.0, 1.0], -10.0).unwrap();
        assert_eq!(
            recourse_guarantee_check(&unreachable, &free).unwrap().verdict,
            Guarantee::GuaranteedNone
        );
    }

    #[test]
    fn discretization_examples() {
        // w = (0.6, 0.8), x on the line through the origin; continuous
        // optimum a* = (0.6, 0.8) lands on the grid when spacing is 0.2
        let model = LinearModel::from_coefficients(vec![0.6, 0.8], 0.0).unwrap();
        let s = spec(vec![
            FeatureActionSpec::new("x1", FeatureKind::Real, -2.0, 2.0, Actionability::Any),
            FeatureActionSpec::new("x2", FeatureKind::Real, -2.0, 2.0, Actionability::Any),
        ]);
        let inst = DiscretizationInstance {
            model,
            spec: s,
            x: vec![-0.6, -0.8],
            c_x: 1.0,
            grid_size: 20,
        };
        let r = &discretization_error_report(std::slice::from_ref(&inst)).unwrap()[0];
        assert!((r.continuous_cost - 1.0).abs() < 1e-12);
        assert!(r.gap.abs() < 1e-12);
        assert!(r.within_bound);

        let coarse = DiscretizationInstance {
            grid_size: 3,
            ..inst.clone()
        };
        let r = &discretization_error_report(&[coarse]).unwrap()[0];
        assert!(r.gap > 0.0 && r.within_bound);

        // spacing (3, 4) gives a bound of 5
        let wide = DiscretizationInstance {
            spec: spec(vec![
                FeatureActionSpec::new("x1", FeatureKind::Real, -4.0, 2.0, Actionability::Any),
                FeatureActionSpec::new("x2", FeatureKind::Real, -5.0, 3.0, Actionability::Any),
            ]),
            x: vec![-1.0, -1.0],
            grid_size: 2,
            ..inst
        };
        let r = &discretization_error_report(&[wide]).unwrap()[0];
        assert_eq!(r.bound, 5.0);
        assert!(r.gap <= 5.0 && r.within_bound);
    }

    fn record(row: usize, score: f64, cost: Option<f64>) -> AuditRecord {
        AuditRecord {
            row,
            score,
            label: -1,
            status: if cost.is_some() {
                RecordStatus::Optimal
            } else {
                RecordStatus::Infeasible
            },
            cost,
            support: vec![],
            solve_time: Duration::ZERO,
        }
    }

    #[test]
    fn group_medians() {
        let records = vec![
            record(0, -1.0, Some(0.1)),
            record(1, -1.0, Some(0.2)),
            record(2, -1.0, Some(0.5)),
            record(3, -1.0, Some(0.6)),
        ];
        let groups: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let r = disparity_report(&records, &groups, None, Matching::None).unwrap();
        assert!((r.groups[0].cost_quantiles.as_ref().unwrap().p50 - 0.15).abs() < 1e-15);
        assert!((r.groups[1].cost_quantiles.as_ref().unwrap().p50 - 0.55).abs() < 1e-15);
    }

    #[test]
    fn empty_group_has_null_statistics() {
        let mut positive = record(1, 1.0, None);
        positive.status = RecordStatus::SkippedPositive;
        let records = vec![record(0, -1.0, Some(0.3)), positive];
        let groups: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let r = disparity_report(&records, &groups, None, Matching::None).unwrap();
        assert_eq!(r.groups[1].n_audited, 0);
        assert_eq!(r.groups[1].feasibility_rate, None);
        assert_eq!(r.groups[1].cost_quantiles, None);
    }

    #[test]
    fn matched_cells_pool_only_shared_cells() {
        let records: Vec<AuditRecord> = (0..20).map(|i| record(i, -(i as f64) - 1.0, Some(i as f64))).collect();
        // group b only appears in the highest-score half
        let groups: Vec<String> = (0..20)
            .map(|i| if i < 10 || i % 2 == 0 { "a" } else { "b" }.to_string())
            .collect();
        let labels = vec![-1i8; 20];
        let r = disparity_report(&records, &groups, Some(&labels), Matching::ByLabelAndScoreBand).unwrap();
        assert_eq!(r.cells.len(), 10);
        assert_eq!(r.pooled[1].n_audited, 5);
        assert_eq!(r.pooled[0].n_audited, 5);
        assert!(disparity_report(&records, &groups, None, Matching::ByLabelAndScoreBand).is_err());
    }
}
