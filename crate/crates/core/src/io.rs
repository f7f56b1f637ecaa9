//! CSV ingestion, plan/draw export and JSON output with a metadata block.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, Family, GlmModel};
use crate::subsampling::{SubsampleDraw, SubsamplePlan};

/// A dataset read from CSV plus what is needed to interpret it.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Covariate column names in model order (including `(intercept)`).
    pub feature_names: Vec<String>,
    pub response_column: String,
    /// Original class labels; entry `k` was mapped to class `k`.
    pub class_labels: Option<Vec<String>>,
}

/// Reads a headed CSV file. Every column except `response_column` is a
/// numeric covariate.
pub fn ingest_csv(path: &Path, response_column: &str, model: &GlmModel, intercept: bool) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, response_column, model, intercept)
}

pub fn ingest_reader<R: Read>(reader: R, response_column: &str, model: &GlmModel, intercept: bool) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Data("empty file: no header row".into()));
    }
    let resp = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::Data(format!("response column `{response_column}` not found in header")))?;
    let covariates: Vec<usize> = (0..headers.len()).filter(|&j| j != resp).collect();
    let mut x = Vec::new();
    let mut raw_y = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!("line {line}: expected {} fields, found {}", headers.len(), record.len())));
        }
        if intercept {
            x.push(1.0);
        }
        for &j in &covariates {
            x.push(parse_cell(&record[j], line, &headers[j])?);
        }
        let cell = &record[resp];
        if cell.is_empty() {
            return Err(Error::Data(format!("line {line}, column `{}`: blank cell", headers[resp])));
        }
        raw_y.push(cell.to_string());
    }
    if raw_y.is_empty() {
        return Err(Error::Data("empty file: no data rows".into()));
    }
    let (y, class_labels) = match model.family {
        Family::MultiLogistic { classes } => {
            let (y, labels) = remap_labels(&raw_y, classes)?;
            (y, Some(labels))
        }
        _ => {
            let mut y = Vec::with_capacity(raw_y.len());
            for (k, cell) in raw_y.iter().enumerate() {
                let v = parse_cell(cell, k + 2, &headers[resp])?;
                model
                    .validate_response(v)
                    .map_err(|e| Error::Data(format!("line {}, column `{}`: {e}", k + 2, headers[resp])))?;
                y.push(v);
            }
            (y, None)
        }
    };
    let mut feature_names = Vec::new();
    if intercept {
        feature_names.push("(intercept)".to_string());
    }
    feature_names.extend(covariates.iter().map(|&j| headers[j].clone()));
    if feature_names.is_empty() {
        return Err(Error::Data("no covariate columns and no intercept".into()));
    }
    let dataset = Dataset::from_rows(x, y, feature_names.len())?;
    Ok(Ingested { dataset, feature_names, response_column: response_column.to_string(), class_labels })
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::Data(format!("line {line}, column `{column}`: blank cell")));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::Data(format!("line {line}, column `{column}`: `{cell}` is not numeric")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("line {line}, column `{column}`: non-finite value")));
    }
    Ok(v)
}

/// Maps labels to `0..K-1`: numerically sorted when all labels are numbers,
/// lexicographically otherwise.
fn remap_labels(raw: &[String], classes: usize) -> Result<(Vec<f64>, Vec<String>)> {
    let mut labels: Vec<String> = raw.iter().cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(vals) = numeric {
        let mut pairs: Vec<(f64, String)> = vals.into_iter().zip(labels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        labels = pairs.into_iter().map(|p| p.1).collect();
    }
    if labels.len() > classes {
        return Err(Error::Data(format!("response has {} distinct labels but the model has {classes} classes", labels.len())));
    }
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let y = raw.iter().map(|l| index[l.as_str()] as f64).collect();
    Ok((y, labels))
}

/// Writes `row_index,probability,indicator` for every row.
pub fn write_plan_csv<W: Write>(writer: W, plan: &SubsamplePlan, draw: &SubsampleDraw) -> Result<()> {
    if plan.len() != draw.indicators.len() {
        return Err(Error::DimensionMismatch { expected: plan.len(), found: draw.indicators.len() });
    }
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Data(format!("write failed: {e}"));
    w.write_record(["row_index", "probability", "indicator"]).map_err(io_err)?;
    for (i, (p, d)) in plan.probabilities.iter().zip(&draw.indicators).enumerate() {
        w.write_record([i.to_string(), format!("{p:e}"), (*d as u8).to_string()]).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))?;
    Ok(())
}

/// Reads back a file written by [`write_plan_csv`] as `(probabilities, draw)`.
pub fn read_plan_csv<R: Read>(reader: R) -> Result<(Vec<f64>, SubsampleDraw)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut probs = Vec::new();
    let mut ind = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() != 3 {
            return Err(Error::Data(format!("line {line}: expected 3 fields")));
        }
        probs.push(parse_cell(&rec[1], line, "probability")?);
        ind.push(match &rec[2] {
            "1" => true,
            "0" => false,
            other => return Err(Error::Data(format!("line {line}, column `indicator`: `{other}` is not 0/1"))),
        });
    }
    Ok((probs, SubsampleDraw::from_indicators(ind)))
}

/// Provenance block attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Echo of the configuration that produced the output.
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
}

impl Metadata {
    pub fn new(seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: "mscle".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            class_labels: None,
        }
    }
}

/// An output document: metadata plus payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub metadata: Metadata,
    pub result: T,
}

pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Data(format!("JSON encoding failed: {e}")))?;
    writeln!(writer).map_err(|e| Error::Data(format!("write failed: {e}")))?;
    Ok(())
}
