//! HTTP API over a frozen model, action set and optional population.
//!
//! Every request is evaluated against the same [`SessionState`]. Flipset
//! overrides are applied to a per-request copy of the action set, so the
//! session never changes after startup.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Map, Value};

use recourse::audit::{input_digests, run_audit, AuditOptions};
use recourse::flipset::{apply_overrides, flipset_for_point, FeatureOverride, FlipsetRequest};
use recourse::report::to_stable_json;
use recourse::{
    fit_percentiles, ActionSetSpec, CostSpec, CostVariant, Dataset, LinearModel, PercentileModel, ProblemOptions,
    RecourseError,
};

/// Largest number of features a request may carry.
pub const MAX_FEATURES: usize = 512;
/// Largest flipset a request may ask for.
pub const MAX_ITEMS: usize = 100;
pub const DEFAULT_ITEMS: usize = 10;

/// The model, action set and population every request is evaluated against.
#[derive(Debug)]
pub struct SessionState {
    session_id: String,
    model: LinearModel,
    spec: ActionSetSpec,
    population: Option<Dataset>,
    percentiles: Option<PercentileModel>,
    options: ProblemOptions,
}

impl SessionState {
    /// Aligns `spec` and `population` to the model and fits percentiles on
    /// the population. `options.margin` is ignored; margins come per request.
    pub fn new(
        model: LinearModel,
        spec: &ActionSetSpec,
        population: Option<&Dataset>,
        options: ProblemOptions,
    ) -> recourse::Result<Self> {
        if model.dim() > MAX_FEATURES {
            return Err(RecourseError::input(format!(
                "the model has {} features; the service accepts at most {MAX_FEATURES}",
                model.dim()
            )));
        }
        let spec = spec.aligned_to(&model)?;
        let population = population.map(|d| d.aligned_to(&model)).transpose()?;
        let percentiles = population.as_ref().map(fit_percentiles).transpose()?;
        let (model_sha, spec_sha) = input_digests(&model, &spec);
        Ok(SessionState {
            session_id: format!("{}-{}", &model_sha[..12], &spec_sha[..12]),
            model,
            spec,
            population,
            percentiles,
            options: ProblemOptions { margin: 0.0, ..options },
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn spec(&self) -> &ActionSetSpec {
        &self.spec
    }

    pub fn percentiles(&self) -> Option<&PercentileModel> {
        self.percentiles.as_ref()
    }

    pub fn options(&self) -> ProblemOptions {
        self.options
    }

    /// Percentile cost when a population is loaded, linear otherwise.
    pub fn default_cost(&self) -> CostVariant {
        if self.percentiles.is_some() {
            CostVariant::TotalLogPercentile
        } else {
            CostVariant::WeightedLinear
        }
    }
}

pub fn router(state: Arc<SessionState>) -> Router {
    Router::new()
        .route("/v1/model", get(model_info))
        .route("/v1/schema", get(schema))
        .route("/v1/predict", post(predict))
        .route("/v1/flipset", post(flipset))
        .route("/v1/audit", post(audit))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no such endpoint", None) })
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<SessionState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Error response body: `{"error": message, "field": name}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>, field: Option<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field,
        }
    }

    fn bad(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message, Some(field.into()))
    }

    /// `context` names the request field the failing value came from.
    fn domain(err: RecourseError, context: Option<&str>) -> Self {
        let nested = |name: &str| match context {
            Some(c) => format!("{c}.{name}"),
            None => name.to_string(),
        };
        match &err {
            RecourseError::NoRecourseNeeded { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, err.to_string(), None)
            }
            e if !e.is_input_error() => {
                eprintln!("request failed: {e}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error", None)
            }
            RecourseError::UnknownFeature(name)
            | RecourseError::MissingFeature(name)
            | RecourseError::NonFinite { feature: name }
            | RecourseError::Feature { feature: name, .. } => Self::bad(nested(name), err.to_string()),
            _ => Self::new(StatusCode::BAD_REQUEST, err.to_string(), context.map(String::from)),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = Map::new();
        body.insert("error".into(), Value::String(self.message));
        if let Some(field) = self.field {
            body.insert("field".into(), Value::String(field));
        }
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            Value::Object(body).to_string(),
        )
            .into_response()
    }
}

fn json_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        eprintln!("worker failed: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error", None)
    })?
}

fn body_object(body: &[u8], allowed: &[&str]) -> Result<Map<String, Value>, ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| ApiError::bad("body", format!("invalid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(ApiError::bad("body", "expected a JSON object"));
    };
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ApiError::bad(key.clone(), "unknown field"));
    }
    Ok(map)
}

fn parse_point(model: &LinearModel, value: &Value, field: &str) -> Result<Vec<f64>, ApiError> {
    let len = match value {
        Value::Array(v) => v.len(),
        Value::Object(m) => m.len(),
        _ => 0,
    };
    if len > MAX_FEATURES {
        return Err(ApiError::bad(
            field,
            format!("at most {MAX_FEATURES} features per point"),
        ));
    }
    model.parse_point(value).map_err(|e| ApiError::domain(e, Some(field)))
}

fn required<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a Value, ApiError> {
    map.get(field).ok_or_else(|| ApiError::bad(field, "required"))
}

fn parse_margin(map: &Map<String, Value>) -> Result<f64, ApiError> {
    match map.get("margin") {
        None | Some(Value::Null) => Ok(0.0),
        Some(v) => match v.as_f64() {
            Some(m) if m.is_finite() && m >= 0.0 => Ok(m),
            _ => Err(ApiError::bad("margin", "expected a non-negative number")),
        },
    }
}

fn parse_cost(state: &SessionState, map: &Map<String, Value>) -> Result<CostSpec, ApiError> {
    let variant = match map.get("cost_variant") {
        None | Some(Value::Null) => state.default_cost(),
        Some(Value::String(s)) => s
            .parse()
            .map_err(|e: RecourseError| ApiError::bad("cost_variant", e.to_string()))?,
        Some(_) => return Err(ApiError::bad("cost_variant", "expected a string")),
    };
    if matches!(variant, CostVariant::ScaledNorm { .. }) {
        return Err(ApiError::bad(
            "cost_variant",
            "l2 cost is not separable and cannot be searched",
        ));
    }
    if variant.is_percentile() && state.percentiles.is_none() {
        return Err(ApiError::bad(
            "cost_variant",
            format!("cost `{variant}` needs a population; start the service with one"),
        ));
    }
    let cost = CostSpec::new(variant);
    match map.get("weights") {
        None | Some(Value::Null) => Ok(cost),
        Some(v) => {
            let weights: BTreeMap<String, f64> = serde_json::from_value(v.clone())
                .map_err(|e| ApiError::bad("weights", format!("expected {{feature: number}}: {e}")))?;
            cost.with_named_weights(&state.model, &weights)
                .map_err(|e| ApiError::domain(e, Some("weights")))
        }
    }
}

fn parse_items(map: &Map<String, Value>) -> Result<usize, ApiError> {
    let (field, value) = match (map.get("T"), map.get("items")) {
        (Some(_), Some(_)) => return Err(ApiError::bad("items", "give either `T` or `items`, not both")),
        (Some(v), None) => ("T", v),
        (None, Some(v)) => ("items", v),
        (None, None) => return Ok(DEFAULT_ITEMS),
    };
    match value.as_u64() {
        Some(0) => Err(ApiError::bad(field, "must be at least 1")),
        Some(t) if t as usize <= MAX_ITEMS => Ok(t as usize),
        Some(_) => Err(ApiError::bad(field, format!("at most {MAX_ITEMS} items per request"))),
        None => Err(ApiError::bad(field, "expected a positive integer")),
    }
}

fn parse_overrides(
    state: &SessionState,
    map: &Map<String, Value>,
) -> Result<BTreeMap<String, FeatureOverride>, ApiError> {
    let Some(value) = map.get("overrides").filter(|v| !v.is_null()) else {
        return Ok(BTreeMap::new());
    };
    let Value::Object(entries) = value else {
        return Err(ApiError::bad(
            "overrides",
            "expected {feature: {actionability?, lb?, ub?}}",
        ));
    };
    let mut overrides = BTreeMap::new();
    for (name, entry) in entries {
        let field = format!("overrides.{name}");
        if state.spec.get(name).is_none() {
            return Err(ApiError::bad(field, "unknown feature"));
        }
        let o: FeatureOverride =
            serde_json::from_value(entry.clone()).map_err(|e| ApiError::bad(field.clone(), e.to_string()))?;
        overrides.insert(name.clone(), o);
    }
    apply_overrides(&state.spec, &overrides).map_err(|e| ApiError::domain(e, Some("overrides")))?;
    Ok(overrides)
}

/// Reads a `/v1/flipset` body into a request against `state`.
fn flipset_request(state: &SessionState, body: &[u8]) -> Result<FlipsetRequest, ApiError> {
    let map = body_object(
        body,
        &["x", "overrides", "cost_variant", "weights", "T", "items", "margin"],
    )?;
    Ok(FlipsetRequest {
        x: parse_point(&state.model, required(&map, "x")?, "x")?,
        overrides: parse_overrides(state, &map)?,
        cost: parse_cost(state, &map)?,
        max_items: parse_items(&map)?,
        options: ProblemOptions {
            margin: parse_margin(&map)?,
            ..state.options
        },
    })
}

async fn model_info(State(state): State<Arc<SessionState>>) -> Response {
    let features: Vec<Value> = state
        .spec
        .features()
        .iter()
        .zip(state.model.coefficients())
        .map(|(f, w)| {
            let mut entry = serde_json::to_value(f).expect("feature spec serializes");
            entry["coefficient"] = json!(w);
            entry
        })
        .collect();
    json_response(to_stable_json(&json!({
        "session_id": state.session_id,
        "intercept": state.model.intercept(),
        "features": features,
        "default_cost": state.default_cost().flag(),
        "population_size": state.population.as_ref().map(Dataset::len),
        "limits": {"max_features": MAX_FEATURES, "max_items": MAX_ITEMS},
    })))
}

async fn predict(State(state): State<Arc<SessionState>>, body: Bytes) -> Result<Response, ApiError> {
    let map = body_object(&body, &["x"])?;
    let x = parse_point(&state.model, required(&map, "x")?, "x")?;
    let prediction = state.model.predict(&x).map_err(|e| ApiError::domain(e, Some("x")))?;
    Ok(json_response(to_stable_json(&prediction)))
}

async fn flipset(State(state): State<Arc<SessionState>>, body: Bytes) -> Result<Response, ApiError> {
    let request = flipset_request(&state, &body)?;
    let json = blocking(move || {
        flipset_for_point(&state.model, &state.spec, state.percentiles.as_ref(), &request)
            .map(|(_, document)| document.json)
            .map_err(|e| ApiError::domain(e, Some("x")))
    })
    .await?;
    Ok(json_response(json))
}

fn parse_rows(state: &SessionState, map: &Map<String, Value>) -> Result<Dataset, ApiError> {
    match (map.get("rows"), map.get("dataset")) {
        (Some(_), Some(_)) => Err(ApiError::bad("dataset", "give either `rows` or `dataset`, not both")),
        (None, None) => Err(ApiError::bad("rows", "required unless `dataset` is given")),
        (None, Some(reference)) => {
            if map.contains_key("labels") {
                return Err(ApiError::bad("labels", "only allowed with `rows`"));
            }
            match (reference.as_str(), &state.population) {
                (Some("population"), Some(population)) => Ok(population.clone()),
                (Some("population"), None) => Err(ApiError::bad("dataset", "no population is loaded")),
                _ => Err(ApiError::bad("dataset", "the only dataset reference is \"population\"")),
            }
        }
        (Some(rows), None) => {
            let Value::Array(rows) = rows else {
                return Err(ApiError::bad("rows", "expected an array of points"));
            };
            let points = rows
                .iter()
                .enumerate()
                .map(|(i, row)| parse_point(&state.model, row, &format!("rows[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let labels = match map.get("labels") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    serde_json::from_value::<Vec<i8>>(v.clone())
                        .map_err(|e| ApiError::bad("labels", format!("expected an array of -1/+1: {e}")))?,
                ),
            };
            Dataset::new(state.model.feature_names().to_vec(), points, labels)
                .map_err(|e| ApiError::domain(e, Some("labels")))
        }
    }
}

async fn audit(State(state): State<Arc<SessionState>>, body: Bytes) -> Result<Response, ApiError> {
    let map = body_object(
        &body,
        &["rows", "labels", "dataset", "cost_variant", "weights", "margin"],
    )?;
    let data = parse_rows(&state, &map)?;
    let cost = parse_cost(&state, &map)?;
    let options = AuditOptions {
        problem: ProblemOptions {
            margin: parse_margin(&map)?,
            ..state.options
        },
        jobs: None,
    };
    let json = blocking(move || {
        run_audit(
            &state.model,
            &data,
            &state.spec,
            &cost,
            state.percentiles.as_ref(),
            &options,
        )
        .map(|report| report.to_json())
        .map_err(|e| ApiError::domain(e, Some("rows")))
    })
    .await?;
    Ok(json_response(json))
}

async fn schema() -> Response {
    json_response(to_stable_json(&schema_document()))
}

/// Request and response shapes of every endpoint.
pub fn schema_document() -> Value {
    let point = json!({
        "oneOf": [
            {"type": "object", "description": "feature name -> number, every model feature present"},
            {"type": "array", "items": "number", "description": "values in model feature order"}
        ],
        "maxFeatures": MAX_FEATURES
    });
    let cost = json!({
        "cost_variant": {"type": "string", "enum": ["max_pct", "total_log_pct", "linear"], "optional": true,
                         "default": "total_log_pct with a population, linear otherwise"},
        "weights": {"type": "object", "description": "feature name -> positive weight for the linear cost", "optional": true},
        "margin": {"type": "number", "minimum": 0, "default": 0, "description": "required score after the change"}
    });
    json!({
        "GET /v1/model": {
            "response": {"session_id": "string", "intercept": "number", "default_cost": "string",
                         "population_size": "integer or null",
                         "features": [{"name": "string", "kind": "real|integer|binary", "lb": "number", "ub": "number",
                                       "actionability": "fixed|any|increase_only|decrease_only",
                                       "grid_size": "integer, optional", "linked_group": "string, optional",
                                       "coefficient": "number"}],
                         "limits": {"max_features": MAX_FEATURES, "max_items": MAX_ITEMS}}
        },
        "POST /v1/predict": {
            "request": {"x": point},
            "response": {"score": "number", "label": "-1 or 1"}
        },
        "POST /v1/flipset": {
            "request": {
                "x": point,
                "overrides": {"type": "object", "optional": true,
                              "description": "feature name -> {actionability?, lb?, ub?}, applied to this request only"},
                "T": {"type": "integer", "minimum": 1, "maximum": MAX_ITEMS, "default": DEFAULT_ITEMS,
                      "alias": "items"},
                "cost_variant": cost["cost_variant"], "weights": cost["weights"], "margin": cost["margin"]
            },
            "response": {"items": [{"changes": [{"feature": "string", "current": "number", "required": "number"}],
                                    "cost": "number"}],
                         "exhausted": "boolean, true when no further flipping feature set exists",
                         "caveat": "string"},
            "errors": {"400": "invalid request, with the offending field", "422": "the point is already predicted +1"}
        },
        "POST /v1/audit": {
            "request": {
                "rows": {"type": "array", "items": point, "description": "points to audit"},
                "labels": {"type": "array", "items": "-1 or 1", "optional": true},
                "dataset": {"type": "string", "enum": ["population"], "description": "audit the loaded population instead of rows"},
                "cost_variant": cost["cost_variant"], "weights": cost["weights"], "margin": cost["margin"]
            },
            "response": "audit report: counts, feasibility_rate, cost_quantiles, fingerprint and per-row records"
        },
        "error": {"error": "string", "field": "string, present when one request field is at fault"}
    })
}
