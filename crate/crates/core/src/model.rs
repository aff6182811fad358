//! Linear classifiers, labelled datasets and their on-disk formats.
//!
//! A [`LinearModel`] predicts `+1` exactly when `intercept + w·x >= 0`. The
//! intercept is kept apart from the coefficients so that action vectors stay
//! `d`-dimensional.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: i8,
}

impl Prediction {
    fn from_score(score: f64) -> Self {
        let label = if score >= 0.0 { 1 } else { -1 };
        Prediction { score, label }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    feature_names: Vec<String>,
    coefficients: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    pub fn new(feature_names: Vec<String>, coefficients: Vec<f64>, intercept: f64) -> Result<Self> {
        if feature_names.len() != coefficients.len() {
            return Err(RecourseError::Dimension {
                expected: feature_names.len(),
                got: coefficients.len(),
            });
        }
        for (name, w) in feature_names.iter().zip(&coefficients) {
            if !w.is_finite() {
                return Err(RecourseError::NonFinite { feature: name.clone() });
            }
        }
        if !intercept.is_finite() {
            return Err(RecourseError::NonFinite {
                feature: "intercept".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(RecourseError::feature(name, "duplicate feature name"));
            }
        }
        Ok(LinearModel {
            feature_names,
            coefficients,
            intercept,
        })
    }

    /// Builds a model with generated names `x1..xd`.
    pub fn from_coefficients(coefficients: Vec<f64>, intercept: f64) -> Result<Self> {
        let names = (1..=coefficients.len()).map(|j| format!("x{j}")).collect();
        Self::new(names, coefficients, intercept)
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn with_intercept(&self, intercept: f64) -> Result<Self> {
        Self::new(self.feature_names.clone(), self.coefficients.clone(), intercept)
    }

    /// Multiplies every coefficient and the intercept by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.feature_names.clone(),
            self.coefficients.iter().map(|w| w * factor).collect(),
            self.intercept * factor,
        )
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RecourseError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(RecourseError::NonFinite {
                feature: self.feature_names[j].clone(),
            });
        }
        Ok(())
    }

    /// `w·x` without the intercept. Assumes `x` has been validated.
    pub(crate) fn linear_part(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.intercept + self.linear_part(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.score(x).map(Prediction::from_score)
    }

    /// Shifts the intercept so that the `ceil(q * n)` highest-scoring rows of
    /// `data` are predicted `+1`.
    ///
    /// Rows tied with the last admitted score are admitted as well, so the
    /// realised positive rate can exceed `q`.
    pub fn calibrate_threshold(&self, data: &Dataset, q: f64) -> Result<LinearModel> {
        if !(q > 0.0 && q < 1.0) {
            return Err(RecourseError::input(format!("target rate {q} must lie in (0, 1)")));
        }
        let data = data.aligned_to(self)?;
        if data.is_empty() {
            return Err(RecourseError::input("cannot calibrate on an empty dataset"));
        }
        let mut scores: Vec<f64> = data.rows().iter().map(|x| self.linear_part(x)).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let n = scores.len();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        let threshold = scores[k - 1];
        // -0.0 keeps the document tidy when the threshold is exactly zero
        self.with_intercept(if threshold == 0.0 { 0.0 } else { -threshold })
    }

    /// Reads a point given either as `{name: number}` covering every feature,
    /// or as an array in model feature order.
    pub fn parse_point(&self, value: &serde_json::Value) -> Result<Vec<f64>> {
        let number = |v: &serde_json::Value, name: &str| {
            v.as_f64()
                .ok_or_else(|| RecourseError::feature(name, "expected a number"))
        };
        match value {
            serde_json::Value::Array(items) => {
                if items.len() != self.dim() {
                    return Err(RecourseError::Dimension {
                        expected: self.dim(),
                        got: items.len(),
                    });
                }
                let x = items
                    .iter()
                    .zip(&self.feature_names)
                    .map(|(v, name)| number(v, name))
                    .collect::<Result<Vec<_>>>()?;
                self.check_point(&x)?;
                Ok(x)
            }
            serde_json::Value::Object(map) => {
                if let Some(name) = map.keys().find(|k| self.feature_index(k).is_none()) {
                    return Err(RecourseError::UnknownFeature(name.clone()));
                }
                let x = self
                    .feature_names
                    .iter()
                    .map(|name| match map.get(name) {
                        Some(v) => number(v, name),
                        None => Err(RecourseError::MissingFeature(name.clone())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.check_point(&x)?;
                Ok(x)
            }
            _ => Err(RecourseError::input(
                "a point must be an object keyed by feature name or an array of numbers",
            )),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let coefficients = self
            .feature_names
            .iter()
            .zip(&self.coefficients)
            .map(|(name, w)| (name.clone(), serde_json::Value::from(*w)))
            .collect();
        ModelDocument {
            intercept: self.intercept,
            coefficients,
        }
    }

    pub fn to_json(&self) -> String {
        crate::report::to_exact_json(&self.to_document())
    }
}

/// JSON form of a model: `{"intercept": number, "coefficients": {name: number}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub intercept: f64,
    pub coefficients: serde_json::Map<String, serde_json::Value>,
}

impl TryFrom<ModelDocument> for LinearModel {
    type Error = RecourseError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let mut names = Vec::with_capacity(doc.coefficients.len());
        let mut coefficients = Vec::with_capacity(doc.coefficients.len());
        for (name, value) in doc.coefficients {
            let w = value
                .as_f64()
                .ok_or_else(|| RecourseError::parse(format!("coefficients.{name}"), "expected a number"))?;
            names.push(name);
            coefficients.push(w);
        }
        LinearModel::new(names, coefficients, doc.intercept)
    }
}

pub fn load_model(reader: impl Read) -> Result<LinearModel> {
    let doc: ModelDocument = serde_json::from_reader(reader)
        .map_err(|e| RecourseError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    doc.try_into()
}

pub fn load_model_str(document: &str) -> Result<LinearModel> {
    load_model(document.as_bytes())
}

/// Feature vectors with optional `±1` labels and optional group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<i8>>,
    groups: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Option<Vec<i8>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(RecourseError::parse(
                    format!("row {}", i + 1),
                    format!("expected {} values, got {}", feature_names.len(), row.len()),
                ));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(RecourseError::parse(
                    format!("row {}, column `{}`", i + 1, feature_names[j]),
                    "non-finite value",
                ));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != rows.len() {
                return Err(RecourseError::Dimension {
                    expected: rows.len(),
                    got: labels.len(),
                });
            }
            if let Some(i) = labels.iter().position(|y| *y != 1 && *y != -1) {
                return Err(RecourseError::parse(
                    format!("row {}", i + 1),
                    "labels must be -1 or +1",
                ));
            }
        }
        Ok(Dataset {
            feature_names,
            rows,
            labels,
            groups: None,
        })
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.rows.len() {
            return Err(RecourseError::Dimension {
                expected: self.rows.len(),
                got: groups.len(),
            });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    /// Reorders columns to match `model` by name, dropping unused columns.
    pub fn aligned_to(&self, model: &LinearModel) -> Result<Dataset> {
        self.select(model.feature_names())
    }

    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let index: Vec<usize> = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| RecourseError::MissingFeature(name.clone()))
            })
            .collect::<Result<_>>()?;
        if index.iter().enumerate().all(|(i, &j)| i == j) && names.len() == self.feature_names.len() {
            return Ok(self.clone());
        }
        Ok(Dataset {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| index.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetOptions {
    /// Column holding `±1` labels.
    pub label_column: Option<String>,
    /// Column holding group tags, read as strings.
    pub group_column: Option<String>,
}

/// Reads a UTF-8 CSV with a header row. Every column other than the label and
/// group columns is parsed as a decimal feature.
pub fn load_dataset(reader: impl Read, options: &DatasetOptions) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| RecourseError::parse("header", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |name: &Option<String>| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(name) => header
                .iter()
                .position(|h| h == name)
                .map(Some)
                .ok_or_else(|| RecourseError::parse("header", format!("column `{name}` not found"))),
        }
    };
    let label_col = find(&options.label_column)?;
    let group_col = find(&options.group_column)?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != label_col && Some(c) != group_col)
        .collect();
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let mut rows = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut groups = group_col.map(|_| Vec::new());
    for (i, record) in csv.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| RecourseError::parse(format!("row {row_no}"), e.to_string()))?;
        if record.len() != header.len() {
            return Err(RecourseError::parse(
                format!("row {row_no}"),
                format!("expected {} fields, got {}", header.len(), record.len()),
            ));
        }
        let row = feature_cols
            .iter()
            .map(|&c| {
                parse_real(&record[c]).ok_or_else(|| {
                    RecourseError::parse(
                        format!("row {row_no}, column `{}`", header[c]),
                        format!("`{}` is not a finite number", &record[c]),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        if let (Some(c), Some(labels)) = (label_col, labels.as_mut()) {
            let y = parse_real(&record[c])
                .filter(|v| *v == 1.0 || *v == -1.0)
                .ok_or_else(|| {
                    RecourseError::parse(
                        format!("row {row_no}, column `{}`", header[c]),
                        format!("label `{}` must be -1 or +1", &record[c]),
                    )
                })?;
            labels.push(y as i8);
        }
        if let (Some(c), Some(groups)) = (group_col, groups.as_mut()) {
            groups.push(record[c].to_owned());
        }
    }
    let data = Dataset::new(names, rows, labels)?;
    match groups {
        Some(groups) => data.with_groups(groups),
        None => Ok(data),
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(w: &[f64], b: f64) -> LinearModel {
        LinearModel::from_coefficients(w.to_vec(), b).unwrap()
    }

    #[test]
    fn predict_examples() {
        let p = model(&[1.0, 1.0, 1.0], -2.5).predict(&[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.score, -0.5);
        assert_eq!(p.label, -1);

        let p = model(&[0.0, 0.0], 0.0).predict(&[3.0, -7.0]).unwrap();
        assert_eq!((p.score, p.label), (0.0, 1));

        let p = model(&[1.0, 2.0], -1.0).predict(&[0.0, 0.0]).unwrap();
        assert_eq!((p.score, p.label), (-1.0, -1));
    }

    #[test]
    fn parse_point_by_name_or_position() {
        let m = model(&[1.0, 2.0], -1.0);
        let named: serde_json::Value = serde_json::from_str(r#"{"x2": 0.5, "x1": 3}"#).unwrap();
        assert_eq!(m.parse_point(&named).unwrap(), vec![3.0, 0.5]);
        assert_eq!(m.parse_point(&serde_json::json!([3, 0.5])).unwrap(), vec![3.0, 0.5]);

        let err = |v: serde_json::Value| m.parse_point(&v).unwrap_err();
        assert!(matches!(err(serde_json::json!({"x1": 1})), RecourseError::MissingFeature(n) if n == "x2"));
        assert!(
            matches!(err(serde_json::json!({"x1": 1, "x2": 2, "x9": 0})), RecourseError::UnknownFeature(n) if n == "x9")
        );
        assert!(matches!(err(serde_json::json!([1])), RecourseError::Dimension { .. }));
        assert!(
            matches!(err(serde_json::json!({"x1": "a", "x2": 2})), RecourseError::Feature { feature, .. } if feature == "x1")
        );
        assert!(matches!(err(serde_json::json!(4)), RecourseError::Input(_)));
    }

    #[test]
    fn parsed_points_round_trip_exactly() {
        // values that only survive text form with correctly rounded parsing
        let m = model(&[1.0; 3], 0.0);
        for i in 0..2000 {
            let t = i as f64;
            let x = vec![(t * 0.37) % 6.0, (t * 0.53) % 4.0, t * 1e-7 + 0.1];
            let text = serde_json::to_string(&x).unwrap();
            let back = m.parse_point(&serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, x, "{text}");
        }
    }

    #[test]
    fn predict_rejects_bad_points() {
        let m = model(&[1.0, 2.0], -1.0);
        assert!(matches!(m.predict(&[1.0]), Err(RecourseError::Dimension { .. })));
        assert!(matches!(
            m.predict(&[1.0, f64::NAN]),
            Err(RecourseError::NonFinite { .. })
        ));
    }

    fn one_column(values: &[f64]) -> Dataset {
        Dataset::new(vec!["x1".into()], values.iter().map(|v| vec![*v]).collect(), None).unwrap()
    }

    #[test]
    fn calibrate_examples() {
        let m = model(&[1.0], 3.0);
        let data = one_column(&[0.1, 0.2, 0.3, 0.4]);
        let c = m.calibrate_threshold(&data, 0.25).unwrap();
        assert_eq!(c.intercept(), -0.4);
        assert_eq!(c.coefficients(), m.coefficients());
        let positives: Vec<i8> = data.rows().iter().map(|x| c.predict(x).unwrap().label).collect();
        assert_eq!(positives, vec![-1, -1, -1, 1]);

        // ceil(0.99 * 4) = 4: everyone admitted
        let c = m.calibrate_threshold(&data, 0.99).unwrap();
        assert!(c.intercept() <= -0.1);
        assert!(data.rows().iter().all(|x| c.predict(x).unwrap().is_positive()));

        let data = one_column(&[0.4, 0.4, 0.1]);
        let c = m.calibrate_threshold(&data, 0.34).unwrap();
        let labels: Vec<i8> = data.rows().iter().map(|x| c.predict(x).unwrap().label).collect();
        assert_eq!(labels, vec![1, 1, -1]);
    }

    #[test]
    fn calibrate_is_idempotent_and_validates() {
        let m = model(&[1.0, -2.0], 0.7);
        let data = Dataset::new(
            vec!["x1".into(), "x2".into()],
            vec![
                vec![0.3, 0.1],
                vec![1.0, 2.0],
                vec![-0.5, 0.2],
                vec![2.0, 0.0],
                vec![0.0, 0.0],
            ],
            None,
        )
        .unwrap();
        let once = m.calibrate_threshold(&data, 0.4).unwrap();
        let twice = once.calibrate_threshold(&data, 0.4).unwrap();
        assert_eq!(once, twice);
        assert!(m.calibrate_threshold(&data, 0.0).is_err());
        assert!(m.calibrate_threshold(&data, 1.0).is_err());
        let empty = Dataset::new(vec!["x1".into(), "x2".into()], vec![], None).unwrap();
        assert!(m.calibrate_threshold(&empty, 0.5).is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let doc = r#"{"intercept": -1.5, "coefficients": {"income": 0.25, "age": -2}}"#;
        let m = load_model_str(doc).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.feature_names(), &["income".to_string(), "age".to_string()]);
        let again = load_model_str(&m.to_json()).unwrap();
        assert_eq!(m, again);

        // no rounding: a calibrated intercept must keep its boundary row
        let awkward = model(&[0.1 + 0.2, 1.0 / 3.0], -(0.37 * 11.0) % 6.0);
        assert_eq!(load_model_str(&awkward.to_json()).unwrap(), awkward);
    }

    #[test]
    fn model_document_errors() {
        assert!(matches!(
            load_model_str(r#"{"intercept": 1, "coefficients": {"a": "x"}}"#),
            Err(RecourseError::Parse { .. })
        ));
        assert!(load_model_str(r#"{"coefficients": {"a": 1}}"#).is_err());
        assert!(load_model_str(r#"{"intercept": 0, "coefficients": {}, "bias": 2}"#).is_err());
    }

    #[test]
    fn dataset_csv_with_labels() {
        let csv = "income,debt,approved\n1.5,2,1\n0.5,3,-1\n";
        let opts = DatasetOptions {
            label_column: Some("approved".into()),
            ..Default::default()
        };
        let data = load_dataset(csv.as_bytes(), &opts).unwrap();
        assert_eq!(data.feature_names(), &["income".to_string(), "debt".to_string()]);
        assert_eq!(data.rows(), &[vec![1.5, 2.0], vec![0.5, 3.0]]);
        assert_eq!(data.labels(), Some(&[1i8, -1][..]));
    }

    #[test]
    fn dataset_csv_errors_carry_location() {
        let err = load_dataset("a,b\n1,2\n3,oops\n".as_bytes(), &DatasetOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("`b`"), "{msg}");

        let opts = DatasetOptions {
            label_column: Some("y".into()),
            ..Default::default()
        };
        let err = load_dataset("a,y\n1,0\n".as_bytes(), &opts).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn pairing_is_by_name() {
        let data = Dataset::new(vec!["b".into(), "a".into()], vec![vec![2.0, 1.0]], None).unwrap();
        let m = LinearModel::new(vec!["a".into(), "b".into()], vec![1.0, 10.0], 0.0).unwrap();
        let aligned = data.aligned_to(&m).unwrap();
        assert_eq!(aligned.rows()[0], vec![1.0, 2.0]);

        let m = LinearModel::new(vec!["a".into(), "c".into()], vec![1.0, 1.0], 0.0).unwrap();
        match data.aligned_to(&m) {
            Err(RecourseError::MissingFeature(name)) => assert_eq!(name, "c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn label_matches_score_sign(w in proptest::collection::vec(-5.0f64..5.0, 3), b in -5.0f64..5.0,
                                    x in proptest::collection::vec(-5.0f64..5.0, 3), lambda in 0.01f64..100.0) {
            let m = model(&w, b);
            let p = m.predict(&x).unwrap();
            proptest::prop_assert_eq!(p.label == 1, p.score >= 0.0);
            let scaled = m.scaled(lambda).unwrap().predict(&x).unwrap();
            // scaling can move a score that is zero up to rounding across the boundary
            if p.score.abs() > 1e-9 {
                proptest::prop_assert_eq!(scaled.label, p.label);
            }
        }
    }
}
