//! Deterministic serialization helpers shared by every report.

use serde::Serialize;
use serde_json::Value;

/// Rounds to 12 significant digits. Values then print in their shortest
/// round-trip form, so reports are stable across platforms.
pub fn round_sig12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn normalize(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let v = round_sig12(n.as_f64().unwrap_or_default());
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

pub fn to_stable_value(value: &impl Serialize) -> Value {
    normalize(serde_json::to_value(value).unwrap_or(Value::Null))
}

/// Pretty JSON with field order as declared and floats capped at 12
/// significant digits.
pub fn to_stable_json(value: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(&to_stable_value(value)).unwrap_or_default();
    out.push('\n');
    out
}

/// Pretty JSON at full precision, for documents that are read back as
/// inputs (models, action sets) and must round-trip exactly.
pub fn to_exact_json(value: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(value).unwrap_or_default();
    out.push('\n');
    out
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    match sorted.len() {
        0 => None,
        1 => Some(sorted[0]),
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
        }
    }
}

/// p10/p25/p50/p75/p90 of a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Quantiles> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&sorted, p);
        Some(Quantiles {
            p10: q(0.10)?,
            p25: q(0.25)?,
            p50: q(0.50)?,
            p75: q(0.75)?,
            p90: q(0.90)?,
        })
    }
}
