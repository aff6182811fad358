use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use recourse::analysis::{
    actionable_mask, disparity_report, expected_cost_bound, recourse_guarantee_check, verify_bound, BoundCheck,
    DisparityReport, GuaranteeCheck, RecourseBound,
};
use recourse::audit::{run_audit, AuditOptions};
use recourse::flipset::{flipset_for_point, FlipsetRequest};
use recourse::report::to_stable_json;
use recourse::{fit_percentiles, CostSpec, CostVariant, Dataset, DatasetOptions, LinearModel, ProblemOptions};
use recourse_service::SessionState;

use crate::io::{self, input_error};
use crate::{AnalyzeArgs, AuditArgs, CalibrateArgs, FlipsetArgs, Format, ServeArgs, SolveArgs};

/// Percentile cost when a population is available, linear otherwise.
fn default_cost(has_population: bool) -> CostVariant {
    if has_population {
        CostVariant::TotalLogPercentile
    } else {
        CostVariant::WeightedLinear
    }
}

fn cost_spec(args: &SolveArgs, model: &LinearModel, has_population: bool) -> Result<CostSpec> {
    let variant = args.cost.unwrap_or_else(|| default_cost(has_population));
    let cost = CostSpec::new(variant);
    match &args.weights {
        None => Ok(cost),
        Some(path) => {
            let weights = io::weights(path)?;
            cost.with_named_weights(model, &weights)
                .with_context(|| format!("in weights file `{}`", path.display()))
        }
    }
}

fn problem_options(args: &SolveArgs) -> Result<ProblemOptions> {
    if !(args.margin.is_finite() && args.margin >= 0.0) {
        return Err(input_error(format!(
            "--margin must be a non-negative number, got {}",
            args.margin
        )));
    }
    if args.grid_size == 0 {
        return Err(input_error("--grid-size must be at least 1"));
    }
    Ok(ProblemOptions {
        default_grid_size: args.grid_size,
        prune_by_sign: !args.no_prune,
        margin: args.margin,
    })
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let model = io::model(&args.model.model)?;
    let spec = io::action_set(&args.model.actions)?;
    let data = io::dataset(&args.data.data, &args.data.options())?;
    let cost = cost_spec(&args.solve, &model, true)?;
    let audit_options = AuditOptions {
        problem: problem_options(&args.solve)?,
        jobs: args.jobs,
    };
    let percentiles = if cost.variant.is_percentile() {
        Some(fit_percentiles(&data)?)
    } else {
        None
    };
    let report = run_audit(&model, &data, &spec, &cost, percentiles.as_ref(), &audit_options)?;

    let json = report.to_json();
    let csv = report.to_csv()?;
    let json_path = with_suffix(&args.out, ".json");
    let csv_path = with_suffix(&args.out, ".csv");
    io::write_atomic(&json_path, &json)?;
    io::write_atomic(&csv_path, &csv)?;
    eprintln!(
        "audited {} of {} rows: {} with recourse, {} without; wrote {} and {}",
        report.n_audited,
        report.n_rows,
        report.n_optimal,
        report.n_infeasible,
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

pub fn flipset(args: FlipsetArgs) -> Result<()> {
    let model = io::model(&args.model.model)?;
    let spec = io::action_set(&args.model.actions)?;
    let data = match &args.data {
        Some(path) => {
            let options = DatasetOptions {
                label_column: args.label_column.clone(),
                group_column: args.group_column.clone(),
            };
            Some(io::dataset(path, &options)?.aligned_to(&model)?)
        }
        None => None,
    };
    let x = match (&args.point, args.row, &data) {
        (Some(path), _, _) => io::point(path, &model)?,
        (None, Some(row), Some(data)) => data
            .rows()
            .get(row)
            .cloned()
            .ok_or_else(|| input_error(format!("--row {row} is out of range; the data has {} rows", data.len())))?,
        _ => return Err(input_error("give --point, or --row with --data")),
    };
    let cost = cost_spec(&args.solve, &model, data.is_some())?;
    let percentiles = match &data {
        Some(d) if cost.variant.is_percentile() => Some(fit_percentiles(d)?),
        _ => None,
    };
    let overrides = match &args.overrides {
        Some(path) => io::overrides(path)?,
        None => Default::default(),
    };
    let request = FlipsetRequest {
        x,
        overrides,
        cost,
        max_items: args.items,
        options: problem_options(&args.solve)?,
    };
    let (_, document) = flipset_for_point(&model, &spec, percentiles.as_ref(), &request)?;
    let out = match args.format {
        Format::Text => document.text,
        Format::Json => document.json,
    };
    io::emit(args.out.as_deref(), &out)
}

#[derive(Serialize)]
struct BoundSection {
    estimate: RecourseBound,
    check: BoundCheck,
}

#[derive(Serialize)]
struct Analysis {
    guarantee: GuaranteeCheck,
    bound: Option<BoundSection>,
    disparity: Option<DisparityReport>,
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let model = io::model(&args.model.model)?;
    let spec = io::action_set(&args.model.actions)?;
    let data = io::dataset(&args.data.data, &args.data.options())?;

    let guarantee = recourse_guarantee_check(&model, &spec)?;
    let bound = match data.labels() {
        Some(_) => {
            let mask = actionable_mask(&model, &spec)?;
            let unit = |_: &[f64]| 1.0;
            Some(BoundSection {
                estimate: expected_cost_bound(&model, &data, &mask, &unit)?,
                check: verify_bound(&model, &data, &mask, &unit)?,
            })
        }
        None => None,
    };
    let disparity = match data.groups() {
        Some(groups) => {
            let cost = cost_spec(&args.solve, &model, true)?;
            let percentiles = if cost.variant.is_percentile() {
                Some(fit_percentiles(&data)?)
            } else {
                None
            };
            let audit_options = AuditOptions {
                problem: problem_options(&args.solve)?,
                jobs: args.jobs,
            };
            let report = run_audit(&model, &data, &spec, &cost, percentiles.as_ref(), &audit_options)?;
            Some(disparity_report(
                &report.records,
                groups,
                data.labels(),
                args.matching.into(),
            )?)
        }
        None => None,
    };
    let analysis = Analysis {
        guarantee,
        bound,
        disparity,
    };
    io::emit(args.out.as_deref(), &to_stable_json(&analysis))
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let model = io::model(&args.model)?;
    let data = io::dataset(&args.data.data, &args.data.options())?;
    let calibrated = model.calibrate_threshold(&data, args.rate)?;
    let aligned = data.aligned_to(&calibrated)?;
    let positive = aligned
        .rows()
        .iter()
        .filter(|x| calibrated.predict(x).is_ok_and(|p| p.is_positive()))
        .count();
    eprintln!(
        "intercept {} -> {}; {positive} of {} rows predicted +1",
        model.intercept(),
        calibrated.intercept(),
        aligned.len()
    );
    io::emit(args.out.as_deref(), &calibrated.to_json())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let model = io::model(&args.model.model)?;
    let spec = io::action_set(&args.model.actions)?;
    let population: Option<Dataset> = match &args.data {
        Some(path) => {
            let options = DatasetOptions {
                label_column: args.label_column.clone(),
                group_column: args.group_column.clone(),
            };
            Some(io::dataset(path, &options)?)
        }
        None => None,
    };
    let options = ProblemOptions {
        default_grid_size: args.grid_size,
        prune_by_sign: !args.no_prune,
        margin: 0.0,
    };
    let state = Arc::new(SessionState::new(model, &spec, population.as_ref(), options)?);

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| input_error(format!("cannot listen on {addr}: {e}")))?;
        eprintln!(
            "session {} listening on http://{}",
            state.session_id(),
            listener.local_addr()?
        );
        recourse_service::serve(listener, state).await?;
        Ok(())
    })
}
