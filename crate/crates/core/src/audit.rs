//! Population audits: solve every negatively predicted row and summarize
//! feasibility and cost.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::actions::{ActionSetSpec, PercentileModel};
use crate::costs::{CostSpec, CostVariant};
use crate::error::{RecourseError, Result};
use crate::model::{Dataset, LinearModel};
use crate::report::{round_sig12, to_stable_json, Quantiles};
use crate::solver::{problem_for_point, solve, ProblemOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Optimal,
    Infeasible,
    SkippedPositive,
}

impl RecordStatus {
    fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Optimal => "optimal",
            RecordStatus::Infeasible => "infeasible",
            RecordStatus::SkippedPositive => "skipped_positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub row: usize,
    pub score: f64,
    /// Predicted label, not the label column of the data.
    pub label: i8,
    pub status: RecordStatus,
    pub cost: Option<f64>,
    /// Names of the changed features.
    pub support: Vec<String>,
    /// Wall-clock solve time. Not serialized, so reports stay reproducible.
    #[serde(skip)]
    pub solve_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fingerprint {
    pub model_sha256: String,
    pub action_set_sha256: String,
    pub cost: CostSpec,
    pub margin: f64,
    pub default_grid_size: usize,
    pub prune_by_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n_rows: usize,
    /// Rows predicted negative.
    pub n_audited: usize,
    pub n_optimal: usize,
    pub n_infeasible: usize,
    /// `n_optimal / n_audited`; `None` when nothing was audited.
    pub feasibility_rate: Option<f64>,
    /// Over optimal records only.
    pub cost_quantiles: Option<Quantiles>,
    pub fingerprint: Fingerprint,
    pub records: Vec<AuditRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuditOptions {
    pub problem: ProblemOptions,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the stable JSON forms of `model` and `spec`.
pub fn input_digests(model: &LinearModel, spec: &ActionSetSpec) -> (String, String) {
    (
        sha256_hex(model.to_json().as_bytes()),
        sha256_hex(spec.to_json().as_bytes()),
    )
}

/// Solves the recourse problem for every row with a negative prediction.
///
/// `data` and `spec` are aligned to the model by feature name. Percentile
/// costs require `percentiles`; the other costs ignore it.
pub fn run_audit(
    model: &LinearModel,
    data: &Dataset,
    spec: &ActionSetSpec,
    cost: &CostSpec,
    percentiles: Option<&PercentileModel>,
    options: &AuditOptions,
) -> Result<AuditReport> {
    if let Some(name) = data.feature_names().iter().find(|n| spec.get(n).is_none()) {
        return Err(RecourseError::feature(
            name,
            "dataset column has no entry in the action set",
        ));
    }
    let data = data.aligned_to(model)?;
    let spec = spec.aligned_to(model)?;
    let percentiles = match percentiles {
        Some(p) => Some(p.select(model.feature_names())?),
        None if cost.variant.is_percentile() => {
            return Err(RecourseError::input(format!(
                "cost `{}` needs a population to fit percentiles",
                cost.variant
            )))
        }
        None => None,
    };
    if cost.objective().is_none() {
        return Err(RecourseError::input(format!(
            "cost `{}` cannot be used in audits",
            cost.variant
        )));
    }

    let names = model.feature_names();
    let audit_row = |(row, x): (usize, &Vec<f64>)| -> Result<AuditRecord> {
        let prediction = model.predict(x)?;
        let mut record = AuditRecord {
            row,
            score: prediction.score,
            label: prediction.label,
            status: RecordStatus::SkippedPositive,
            cost: None,
            support: vec![],
            solve_time: Duration::ZERO,
        };
        if prediction.is_positive() {
            return Ok(record);
        }
        let start = Instant::now();
        let problem = problem_for_point(model, &spec, x, cost, percentiles.as_ref(), &options.problem)
            .map_err(|e| locate_row(row, e))?;
        let solution = solve(&problem);
        record.solve_time = start.elapsed();
        match solution.status {
            SolveStatus::Infeasible => record.status = RecordStatus::Infeasible,
            SolveStatus::Optimal | SolveStatus::NoActionNeeded => {
                record.status = RecordStatus::Optimal;
                record.cost = solution.cost;
                record.support = solution.support.iter().map(|&j| names[j].clone()).collect();
            }
        }
        Ok(record)
    };

    let rows: Vec<(usize, &Vec<f64>)> = data.rows().iter().enumerate().collect();
    let records: Vec<AuditRecord> = match options.jobs {
        None => rows.into_par_iter().map(audit_row).collect::<Result<_>>()?,
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| RecourseError::Internal(format!("cannot start worker pool: {e}")))?;
            pool.install(|| rows.into_par_iter().map(audit_row).collect::<Result<_>>())?
        }
    };

    let n_optimal = records.iter().filter(|r| r.status == RecordStatus::Optimal).count();
    let n_infeasible = records.iter().filter(|r| r.status == RecordStatus::Infeasible).count();
    let n_audited = n_optimal + n_infeasible;
    let costs: Vec<f64> = records.iter().filter_map(|r| r.cost).collect();
    let (model_sha256, action_set_sha256) = input_digests(model, &spec);
    Ok(AuditReport {
        n_rows: records.len(),
        n_audited,
        n_optimal,
        n_infeasible,
        feasibility_rate: (n_audited > 0).then(|| n_optimal as f64 / n_audited as f64),
        cost_quantiles: Quantiles::of(&costs),
        fingerprint: Fingerprint {
            model_sha256,
            action_set_sha256,
            cost: cost.clone(),
            margin: options.problem.margin,
            default_grid_size: options.problem.default_grid_size,
            prune_by_sign: options.problem.prune_by_sign,
        },
        records,
    })
}

fn locate_row(row: usize, err: RecourseError) -> RecourseError {
    if err.is_input_error() {
        RecourseError::parse(format!("row {row}"), err.to_string())
    } else {
        err
    }
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        to_stable_json(self)
    }

    /// One line per record: `row,label,status,cost,support`, support as
    /// semicolon-joined feature names.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| RecourseError::Internal(format!("csv output: {e}"));
        writer
            .write_record(["row", "label", "status", "cost", "support"])
            .map_err(csv_err)?;
        for r in &self.records {
            writer
                .write_record([
                    r.row.to_string(),
                    r.label.to_string(),
                    r.status.as_str().to_string(),
                    r.cost.map(|c| round_sig12(c).to_string()).unwrap_or_default(),
                    r.support.join(";"),
                ])
                .map_err(csv_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| RecourseError::Internal(format!("csv output: {e}")))?;
        String::from_utf8(bytes).map_err(|e| RecourseError::Internal(e.to_string()))
    }

    pub fn optimal_costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.cost)
    }
}

/// For each threshold `t`, the number of optimal records with cost `> t`:
/// how many people lack recourse when every feature may move by less than
/// `t` in percentile terms. Requires a max-percentile-shift audit.
pub fn summarize_thresholds(report: &AuditReport, thresholds: &[f64]) -> Result<Vec<usize>> {
    if report.fingerprint.cost.variant != CostVariant::MaxPercentileShift {
        return Err(RecourseError::input(format!(
            "threshold summaries need a `{}` audit, this one used `{}`",
            CostVariant::MaxPercentileShift,
            report.fingerprint.cost.variant
        )));
    }
    Ok(thresholds
        .iter()
        .map(|&t| report.optimal_costs().filter(|&c| c > t).count())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{Actionability, FeatureActionSpec, FeatureKind};

    fn immutable_binary_population() -> (LinearModel, Dataset, ActionSetSpec) {
        let model = LinearModel::from_coefficients(vec![1.0, 1.0, 1.0], -2.5).unwrap();
        let spec = ActionSetSpec::new(vec![
            FeatureActionSpec::binary("x1", Actionability::Fixed),
            FeatureActionSpec::binary("x2", Actionability::Any),
            FeatureActionSpec::binary("x3", Actionability::Any),
        ])
        .unwrap();
        let rows = vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ];
        let data = Dataset::new(model.feature_names().to_vec(), rows, None).unwrap();
        (model, data, spec)
    }

    #[test]
    fn immutable_zero_rows_are_infeasible() {
        let (model, data, spec) = immutable_binary_population();
        let report = run_audit(
            &model,
            &data,
            &spec,
            &CostSpec::new(CostVariant::WeightedLinear),
            None,
            &AuditOptions::default(),
        )
        .unwrap();
        let status: Vec<RecordStatus> = report.records.iter().map(|r| r.status).collect();
        assert_eq!(
            status,
            vec![
                RecordStatus::Infeasible,
                RecordStatus::SkippedPositive,
                RecordStatus::Optimal,
                RecordStatus::Infeasible
            ]
        );
        assert_eq!(report.n_audited, 3);
        assert_eq!(report.feasibility_rate, Some(1.0 / 3.0));
        assert_eq!(report.records[2].support, vec!["x2".to_string()]);
        assert_eq!(report.cost_quantiles.as_ref().unwrap().p50, 1.0);
    }

    #[test]
    fn csv_lists_every_row() {
        let (model, data, spec) = immutable_binary_population();
        let report = run_audit(
            &model,
            &data,
            &spec,
            &CostSpec::new(CostVariant::WeightedLinear),
            None,
            &AuditOptions::default(),
        )
        .unwrap();
        let csv = report.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "row,label,status,cost,support");
        assert_eq!(lines[1], "0,-1,infeasible,,");
        assert_eq!(lines[2], "1,1,skipped_positive,,");
        assert_eq!(lines[3], "2,-1,optimal,1,x2");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn all_fixed_model_audits_to_zero() {
        let model = LinearModel::from_coefficients(vec![1.0, 1.0], -1.0).unwrap();
        let spec = ActionSetSpec::new(vec![
            FeatureActionSpec::new("x1", FeatureKind::Real, -5.0, 5.0, Actionability::Fixed),
            FeatureActionSpec::new("x2", FeatureKind::Real, -5.0, 5.0, Actionability::Fixed),
        ])
        .unwrap();
        let data = Dataset::new(
            model.feature_names().to_vec(),
            vec![vec![0.0, 0.0], vec![2.0, 0.0]],
            None,
        )
        .unwrap();
        let report = run_audit(
            &model,
            &data,
            &spec,
            &CostSpec::new(CostVariant::WeightedLinear),
            None,
            &AuditOptions::default(),
        )
        .unwrap();
        assert_eq!(report.feasibility_rate, Some(0.0));
        assert_eq!(report.cost_quantiles, None);
        // still valid JSON
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["n_infeasible"], 1);
    }

    #[test]
    fn percentile_cost_needs_a_population() {
        let (model, data, spec) = immutable_binary_population();
        let err = run_audit(
            &model,
            &data,
            &spec,
            &CostSpec::new(CostVariant::MaxPercentileShift),
            None,
            &AuditOptions::default(),
        );
        assert!(err.unwrap_err().is_input_error());
    }

    fn report_with_costs(costs: &[f64], variant: CostVariant) -> AuditReport {
        let records = costs
            .iter()
            .enumerate()
            .map(|(row, &c)| AuditRecord {
                row,
                score: -1.0,
                label: -1,
                status: RecordStatus::Optimal,
                cost: Some(c),
                support: vec![],
                solve_time: Duration::ZERO,
            })
            .collect();
        AuditReport {
            n_rows: costs.len(),
            n_audited: costs.len(),
            n_optimal: costs.len(),
            n_infeasible: 0,
            feasibility_rate: Some(1.0),
            cost_quantiles: Quantiles::of(costs),
            fingerprint: Fingerprint {
                model_sha256: String::new(),
                action_set_sha256: String::new(),
                cost: CostSpec::new(variant),
                margin: 0.0,
                default_grid_size: 20,
                prune_by_sign: true,
            },
            records,
        }
    }

    #[test]
    fn threshold_counts() {
        let report = report_with_costs(&[0.2, 0.6, 0.95], CostVariant::MaxPercentileShift);
        assert_eq!(summarize_thresholds(&report, &[0.5, 0.9]).unwrap(), vec![2, 1]);
        assert_eq!(summarize_thresholds(&report, &[0.0]).unwrap(), vec![3]);
        let empty = report_with_costs(&[], CostVariant::MaxPercentileShift);
        assert_eq!(summarize_thresholds(&empty, &[0.5, 0.9]).unwrap(), vec![0, 0]);
        let linear = report_with_costs(&[0.2], CostVariant::WeightedLinear);
        assert!(summarize_thresholds(&linear, &[0.5]).is_err());
    }
}
