//! JSON and CSV renderings of analysis results. Floats are written in their
//! shortest round-trip form, so equal results always render to equal bytes.

use std::collections::BTreeMap;

use serde::Serialize;
use sparsity_core::{
    ComponentReport, ComponentRow, EssentialSparsityResult, HistogramReport, MaskSet,
    Normalization, ThresholdResult, ZeroCensus,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn normalization_name(n: Normalization) -> &'static str {
    match n {
        Normalization::None => "none",
        Normalization::Standardize => "standardize",
    }
}

#[derive(Serialize)]
struct HistogramJson<'a> {
    normalization: &'static str,
    tensors: BTreeMap<&'a str, HistogramEntryJson<'a>>,
}

#[derive(Serialize)]
struct HistogramEntryJson<'a> {
    edges: &'a [f64],
    counts: &'a [u64],
}

pub fn render_histogram(report: &HistogramReport, format: Format) -> Result<String> {
    match format {
        Format::Json => json(&HistogramJson {
            normalization: normalization_name(report.normalization),
            tensors: report
                .per_tensor
                .iter()
                .map(|(name, h)| {
                    (
                        name.as_str(),
                        HistogramEntryJson {
                            edges: &h.edges,
                            counts: &h.counts,
                        },
                    )
                })
                .collect(),
        }),
        Format::Csv => csv_text(
            &["tensor", "bin_lo", "bin_hi", "count"],
            report.per_tensor.iter().flat_map(|(name, h)| {
                h.counts.iter().enumerate().map(move |(i, c)| {
                    vec![
                        name.clone(),
                        float(h.edges[i]),
                        float(h.edges[i + 1]),
                        c.to_string(),
                    ]
                })
            }),
        ),
    }
}

#[derive(Serialize)]
struct RowJson<'a> {
    component: &'a str,
    elements: u64,
    pruned: u64,
    sparsity: f64,
}

impl<'a> From<&'a ComponentRow> for RowJson<'a> {
    fn from(r: &'a ComponentRow) -> Self {
        RowJson {
            component: &r.label,
            elements: r.elements,
            pruned: r.pruned,
            sparsity: r.sparsity,
        }
    }
}

#[derive(Serialize)]
struct ComponentsJson<'a> {
    rows: Vec<RowJson<'a>>,
    overall: RowJson<'a>,
}

pub fn render_components(report: &ComponentReport, format: Format) -> Result<String> {
    match format {
        Format::Json => json(&ComponentsJson {
            rows: report.rows.iter().map(RowJson::from).collect(),
            overall: (&report.overall).into(),
        }),
        Format::Csv => csv_text(
            &["component", "elements", "pruned", "sparsity"],
            report
                .rows
                .iter()
                .chain(std::iter::once(&report.overall))
                .map(|r| {
                    vec![
                        r.label.clone(),
                        r.elements.to_string(),
                        r.pruned.to_string(),
                        float(r.sparsity),
                    ]
                }),
        ),
    }
}

#[derive(Serialize)]
struct CensusJson<'a> {
    tolerance: f64,
    total: u64,
    prunable_total: u64,
    zero_fraction: f64,
    per_tensor: &'a BTreeMap<String, u64>,
}

pub fn render_census(census: &ZeroCensus, format: Format) -> Result<String> {
    match format {
        Format::Json => json(&CensusJson {
            tolerance: census.tolerance,
            total: census.total,
            prunable_total: census.prunable_total,
            zero_fraction: census.zero_fraction(),
            per_tensor: &census.per_tensor,
        }),
        Format::Csv => csv_text(
            &["tensor", "zero_count"],
            census
                .per_tensor
                .iter()
                .map(|(n, c)| vec![n.clone(), c.to_string()]),
        ),
    }
}

pub fn render_fractions(fractions: &[(u64, f64)], format: Format) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        iteration: u64,
        zero_fraction: f64,
    }
    match format {
        Format::Json => json(
            &fractions
                .iter()
                .map(|&(iteration, zero_fraction)| Row {
                    iteration,
                    zero_fraction,
                })
                .collect::<Vec<_>>(),
        ),
        Format::Csv => csv_text(
            &["iteration", "zero_fraction"],
            fractions
                .iter()
                .map(|(i, f)| vec![i.to_string(), float(*f)]),
        ),
    }
}

#[derive(Serialize)]
struct SimilarityJson<'a> {
    files: &'a [String],
    matrix: &'a [Vec<f64>],
    #[serde(skip_serializing_if = "Option::is_none")]
    per_tensor: Option<&'a BTreeMap<String, Option<f64>>>,
}

/// Square matrix over `files`; `per_tensor` is included for a pair.
pub fn render_similarity(
    files: &[String],
    matrix: &[Vec<f64>],
    per_tensor: Option<&BTreeMap<String, Option<f64>>>,
    format: Format,
) -> Result<String> {
    match format {
        Format::Json => json(&SimilarityJson {
            files,
            matrix,
            per_tensor,
        }),
        Format::Csv => {
            let mut header = vec!["file"];
            header.extend(files.iter().map(String::as_str));
            csv_text(
                &header,
                files.iter().zip(matrix).map(|(f, row)| {
                    let mut r = vec![f.clone()];
                    r.extend(row.iter().map(|v| float(*v)));
                    r
                }),
            )
        }
    }
}

#[derive(Serialize)]
pub struct EssentialJson {
    pub essential_sparsity: Option<f64>,
    pub threshold: f64,
    pub mode: &'static str,
    pub no_crossing: bool,
    pub dense_below_threshold: bool,
}

pub fn render_essential(r: &EssentialSparsityResult, mode: &'static str) -> Result<String> {
    json(&EssentialJson {
        essential_sparsity: r.essential_sparsity,
        threshold: r.threshold,
        mode,
        no_crossing: r.no_crossing,
        dense_below_threshold: r.dense_below_threshold,
    })
}

#[derive(Serialize)]
struct PruneSummaryJson<'a> {
    method: &'a str,
    target_sparsity: f64,
    sparsity: f64,
    elements: u64,
    pruned: u64,
    tensors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ties_pruned: Option<u64>,
}

pub fn render_prune_summary(set: &MaskSet, threshold: Option<&ThresholdResult>) -> Result<String> {
    json(&PruneSummaryJson {
        method: &set.provenance.method,
        target_sparsity: set.provenance.target_sparsity,
        sparsity: set.sparsity()?,
        elements: set.numel(),
        pruned: set.numel() - set.nnz(),
        tensors: set.len(),
        threshold: threshold.map(|t| t.threshold),
        ties_pruned: threshold.map(|t| t.ties_pruned),
    })
}

pub fn render_json<T: Serialize>(value: &T) -> Result<String> {
    json(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsity_core::TensorHistogram;

    #[test]
    fn histogram_csv_columns() {
        let mut per_tensor = BTreeMap::new();
        per_tensor.insert(
            "w".to_string(),
            TensorHistogram {
                edges: vec![0.0, 0.5, 1.0],
                counts: vec![2, 2],
            },
        );
        let r = HistogramReport {
            normalization: Normalization::None,
            per_tensor,
        };
        assert_eq!(
            render_histogram(&r, Format::Csv).unwrap(),
            "tensor,bin_lo,bin_hi,count\nw,0.0,0.5,2\nw,0.5,1.0,2\n"
        );
        let j: serde_json::Value =
            serde_json::from_str(&render_histogram(&r, Format::Json).unwrap()).unwrap();
        assert_eq!(j["tensors"]["w"]["counts"], serde_json::json!([2, 2]));
    }

    #[test]
    fn components_csv_has_overall_row() {
        let row = |l: &str, e, p| ComponentRow {
            label: l.into(),
            elements: e,
            pruned: p,
            sparsity: p as f64 / e as f64,
        };
        let r = ComponentReport {
            rows: vec![row("query", 4, 1), row("other", 4, 3)],
            overall: row("overall", 8, 4),
        };
        assert_eq!(
            render_components(&r, Format::Csv).unwrap(),
            "component,elements,pruned,sparsity\nquery,4,1,0.25\nother,4,3,0.75\noverall,8,4,0.5\n"
        );
    }
}
