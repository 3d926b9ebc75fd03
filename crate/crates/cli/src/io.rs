use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hv_core::datagen::pps_probabilities;
use hv_core::{validate_design, DesignSpec, HvError};

use crate::Failure;

/// A design read from disk, with the caller's unit ids.
pub struct LoadedDesign {
    pub ids: Vec<String>,
    pub design: DesignSpec,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
}

/// Reads `unit_id,<value>` rows.
pub fn read_keyed(path: &Path, value_col: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_at = column(&headers, "unit_id", path)?;
    let value_at = column(&headers, value_col, path)?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(id_at).unwrap_or_default().to_string();
        let raw = rec.get(value_at).unwrap_or_default();
        let value: f64 = raw.parse().map_err(|_| {
            anyhow!(
                "{}: row {}: `{value_col}` is not a number: {raw:?}",
                path.display(),
                line + 1
            )
        })?;
        ids.push(id);
        values.push(value);
    }
    Ok((ids, values))
}

/// Reads a design file, either `unit_id,pi` or `unit_id,x` with `pps = Some(n)`.
pub fn read_design(path: &Path, pps: Option<usize>) -> Result<LoadedDesign> {
    let (ids, values) = match pps {
        Some(_) => read_keyed(path, "x")?,
        None => read_keyed(path, "pi")?,
    };
    let built = match pps {
        Some(n) => pps_probabilities(&values, n),
        None => validate_design(&values),
    };
    let design = built.map_err(|e| validation(e, &ids))?;
    Ok(LoadedDesign { ids, design })
}

/// Maps a core error to a validation failure naming units by their ids.
pub fn validation(err: HvError, ids: &[String]) -> anyhow::Error {
    let id = |i: usize| ids.get(i).cloned().unwrap_or_else(|| (i + 1).to_string());
    let msg = match &err {
        HvError::NonProbability { index, .. } => format!("NonProbability: unit {}", id(*index)),
        HvError::NonPositiveSize { index, value } => format!("NonPositiveSize: unit {} has size {value}", id(*index)),
        HvError::NonFinite { index } => format!("NonFinite: unit {}", id(*index)),
        HvError::Saturated { indices } => format!(
            "Saturated: units {} reach inclusion probability >= 1",
            indices.iter().map(|&i| id(i)).collect::<Vec<_>>().join(",")
        ),
        other => other.to_string(),
    };
    Failure::Validation(msg).into()
}

/// Aligns a keyed file's values to the design's unit order.
pub fn align(ids: &[String], other_ids: &[String], values: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if other_ids.len() != ids.len() {
        bail!(Failure::Validation(format!(
            "DimensionMismatch: {what} has {} rows, design has {}",
            other_ids.len(),
            ids.len()
        )));
    }
    let index: HashMap<&str, usize> = other_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| values[i])
                .ok_or_else(|| Failure::Validation(format!("{what}: unit {id} missing")).into())
        })
        .collect()
}

pub fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}
