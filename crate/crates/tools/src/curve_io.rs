//! Sparsity-curve input.
//!
//! CSV form:
//!
//! ```text
//! # dense=0.90
//! sparsity,metric
//! 0.1,0.90
//! ```
//!
//! JSON form: `{"dense": 0.90, "points": [[0.1, 0.90], ...]}`.

use std::path::Path;

use serde::Deserialize;
use sparsity_core::SparsityCurve;

use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveJson {
    dense: f64,
    points: Vec<(f64, f64)>,
}

/// Parses either form, choosing JSON when the text starts with `{`.
pub fn parse_curve(text: &str) -> Result<SparsityCurve> {
    if text.trim_start().starts_with('{') {
        parse_curve_json(text)
    } else {
        parse_curve_csv(text)
    }
}

pub fn parse_curve_json(text: &str) -> Result<SparsityCurve> {
    let doc: CurveJson = serde_json::from_str(text).map_err(|e| Error::Curve(e.to_string()))?;
    Ok(SparsityCurve::new(doc.points, doc.dense)?)
}

pub fn parse_curve_csv(text: &str) -> Result<SparsityCurve> {
    let mut dense = None;
    for line in text.lines() {
        let Some(comment) = line.trim().strip_prefix('#') else {
            continue;
        };
        if let Some(v) = comment.trim().strip_prefix("dense=") {
            if dense.is_some() {
                return Err(Error::Curve("more than one '# dense=' line".into()));
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Curve(format!("bad dense value '{}'", v.trim())))?;
            dense = Some(v);
        }
    }
    let dense = dense.ok_or_else(|| Error::Curve("missing '# dense=<value>' line".into()))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["sparsity", "metric"] {
        return Err(Error::Curve(format!(
            "expected header 'sparsity,metric', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for (i, record) in reader.deserialize::<(f64, f64)>().enumerate() {
        let point = record.map_err(|e| Error::Curve(format!("row {}: {e}", i + 1)))?;
        points.push(point);
    }
    Ok(SparsityCurve::new(points, dense)?)
}

pub fn read_curve(path: &Path) -> Result<SparsityCurve> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    parse_curve(&text)
}
