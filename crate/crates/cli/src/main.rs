//! `recourse`: audits, flipsets and analysis for linear classifiers.
//!
//! Exit status is 0 on success, 1 when an input is wrong and 2 when the
//! tool itself fails.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use recourse::actions::DEFAULT_GRID_SIZE;
use recourse::analysis::Matching;
use recourse::{CostVariant, DatasetOptions, RecourseError};

const FORMATS: &str = "\
Input formats:
  model      JSON {\"intercept\": number, \"coefficients\": {feature: number, ...}}.
             Feature order is the order of the coefficients.
  actions    JSON array with one entry per feature:
             {\"name\": str, \"kind\": \"real\"|\"integer\"|\"binary\", \"lb\": number, \"ub\": number,
              \"actionability\": \"fixed\"|\"any\"|\"increase_only\"|\"decrease_only\",
              \"grid_size\": int (optional, real features), \"linked_group\": str (optional)}
             Features in the same linked group may not change together.
  data       CSV with a header row naming the features. The label column (values -1/+1)
             and the group column are excluded from the features.
  point      JSON {feature: number} covering every model feature, or an array in model order.
  weights    JSON {feature: positive number} for the linear cost; missing features weigh 1.
  overrides  JSON {feature: {\"actionability\"?, \"lb\"?, \"ub\"?}} applied to the action set.

Costs:
  max_pct        largest shift in population percentile over the changed features
  total_log_pct  sum of log percentile-shift ratios over the changed features
  linear         sum of weight * |change|
  l2             Euclidean norm of the change (analysis only; not searchable)
Percentile costs are fitted on --data.

Exit status: 0 success, 1 input error, 2 internal error.";

#[derive(Parser)]
#[command(name = "recourse", version, about = "Actionable recourse for linear classifiers")]
#[command(after_long_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the minimal-cost change for every negatively predicted row.
    ///
    /// Writes OUT.json (summary, fingerprint and one record per row) and
    /// OUT.csv (row,label,status,cost,support with support joined by ';').
    #[command(after_long_help = FORMATS)]
    Audit(AuditArgs),
    /// List the cheapest minimal sets of changes that flip one point.
    ///
    /// The JSON document is {"items": [{"changes": [{"feature", "current",
    /// "required"}], "cost"}], "exhausted", "caveat"}; "exhausted" is true
    /// when no further flipping feature set exists.
    #[command(after_long_help = FORMATS)]
    Flipset(FlipsetArgs),
    /// Recourse guarantee screen, expected-cost bound and group disparities.
    ///
    /// The JSON document has "guarantee" always, "bound" when a label
    /// column is given and "disparity" when a group column is given.
    #[command(after_long_help = FORMATS)]
    Analyze(AnalyzeArgs),
    /// Move the intercept so a target share of rows is predicted +1.
    #[command(after_long_help = FORMATS)]
    Calibrate(CalibrateArgs),
    /// Serve the HTTP API for one model and action set.
    ///
    /// Endpoints: GET /v1/model, GET /v1/schema, POST /v1/predict,
    /// POST /v1/flipset, POST /v1/audit. GET /v1/schema describes the bodies.
    #[command(after_long_help = FORMATS)]
    Serve(ServeArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Action-set JSON file.
    #[arg(long)]
    actions: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Cost function.
    #[arg(long, value_parser = parse_cost)]
    cost: Option<CostVariant>,
    /// Weights JSON file for the linear cost.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Grid points for real features without their own grid_size.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// Keep actions that move the score the wrong way.
    #[arg(long)]
    no_prune: bool,
    /// Score the changed point must reach.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
}

#[derive(Args)]
struct DataArgs {
    /// CSV data file.
    #[arg(long)]
    data: PathBuf,
    /// Column holding -1/+1 labels.
    #[arg(long)]
    label_column: Option<String>,
    /// Column holding group tags.
    #[arg(long)]
    group_column: Option<String>,
}

impl DataArgs {
    fn options(&self) -> DatasetOptions {
        DatasetOptions {
            label_column: self.label_column.clone(),
            group_column: self.group_column.clone(),
        }
    }
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output prefix; writes OUT.json and OUT.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["point", "row"]))]
struct FlipsetArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solve: SolveArgs,
    /// Point JSON file.
    #[arg(long)]
    point: Option<PathBuf>,
    /// Zero-based row of --data to explain.
    #[arg(long, requires = "data")]
    row: Option<usize>,
    /// CSV data file; the population for percentile costs and the source of --row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column of --data holding labels.
    #[arg(long)]
    label_column: Option<String>,
    /// Column of --data holding group tags.
    #[arg(long)]
    group_column: Option<String>,
    /// Number of items to list.
    #[arg(long, default_value_t = recourse_service::DEFAULT_ITEMS)]
    items: usize,
    /// Overrides JSON file.
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solve: SolveArgs,
    /// How audited rows are paired before comparing groups.
    #[arg(long, value_enum, default_value_t = MatchingArg::None)]
    matching: MatchingArg,
    /// Worker threads for the audit behind the disparity report.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Target share of rows predicted +1, in (0, 1).
    #[arg(long)]
    rate: f64,
    /// Output model file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Population CSV for percentile costs and `"dataset": "population"` audits.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    group_column: Option<String>,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    #[arg(long)]
    no_prune: bool,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    None,
    ByLabelAndScoreBand,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::None => Matching::None,
            MatchingArg::ByLabelAndScoreBand => Matching::ByLabelAndScoreBand,
        }
    }
}

fn parse_cost(s: &str) -> Result<CostVariant, String> {
    s.parse().map_err(|e: RecourseError| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RecourseError>() {
            return if e.is_input_error() { 1 } else { 2 };
        }
        if cause.is::<io::InputError>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Audit(args) => commands::audit(args),
        Command::Flipset(args) => commands::flipset(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
