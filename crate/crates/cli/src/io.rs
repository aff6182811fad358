//! Reading input files and writing reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};

use recourse::flipset::FeatureOverride;
use recourse::{load_action_set, load_dataset, load_model, ActionSetSpec, Dataset, DatasetOptions, LinearModel};

/// A problem with the command line or a file it names. Exits with status 1.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(message: impl Into<String>) -> anyhow::Error {
    InputError(message.into()).into()
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input_error(format!("cannot open {what} file `{}`: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    serde_json::from_reader(open(path, what)?)
        .map_err(|e| input_error(format!("{what} file `{}`: {e}", path.display())))
}

pub fn model(path: &Path) -> Result<LinearModel> {
    load_model(open(path, "model")?).with_context(|| format!("in model file `{}`", path.display()))
}

pub fn action_set(path: &Path) -> Result<ActionSetSpec> {
    load_action_set(open(path, "action set")?).with_context(|| format!("in action set file `{}`", path.display()))
}

pub fn dataset(path: &Path, options: &DatasetOptions) -> Result<Dataset> {
    load_dataset(open(path, "data")?, options).with_context(|| format!("in data file `{}`", path.display()))
}

pub fn point(path: &Path, model: &LinearModel) -> Result<Vec<f64>> {
    let value: serde_json::Value = read_json(path, "point")?;
    model
        .parse_point(&value)
        .with_context(|| format!("in point file `{}`", path.display()))
}

pub fn weights(path: &Path) -> Result<BTreeMap<String, f64>> {
    read_json(path, "weights")
}

pub fn overrides(path: &Path) -> Result<BTreeMap<String, FeatureOverride>> {
    read_json(path, "overrides")
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never see a half-written report.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut file = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| input_error(format!("cannot write to `{}`: {e}", dir.display())))?;
    file.write_all(contents.as_bytes())?;
    file.persist(path)
        .with_context(|| format!("cannot move report into `{}`", path.display()))?;
    Ok(())
}

/// Writes to `path` when given, standard output otherwise.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}
