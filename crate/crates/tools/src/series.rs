//! Zero-weight censuses over a series of checkpoints.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use sparsity_core::dynamics::census_fractions;
use sparsity_core::{zero_census, Sequential, ZeroCensus};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::filter::TensorFilter;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesEntry {
    pub iteration: u64,
    pub path: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestJson {
    entries: Vec<EntryJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryJson {
    iteration: u64,
    path: PathBuf,
}

/// Checkpoint paths ordered by strictly increasing iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointSeries {
    entries: Vec<SeriesEntry>,
}

impl CheckpointSeries {
    pub fn new(entries: Vec<SeriesEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Manifest("series is empty".into()));
        }
        for w in entries.windows(2) {
            if w[1].iteration <= w[0].iteration {
                return Err(Error::Manifest(format!(
                    "iterations must strictly increase ({} then {})",
                    w[0].iteration, w[1].iteration
                )));
            }
        }
        Ok(CheckpointSeries { entries })
    }

    /// Parses a manifest; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let doc: ManifestJson =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        Self::new(
            doc.entries
                .into_iter()
                .map(|e| SeriesEntry {
                    iteration: e.iteration,
                    path: base.join(e.path),
                })
                .collect(),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn entries(&self) -> &[SeriesEntry] {
        &self.entries
    }
}

fn census_entry(entry: &SeriesEntry, filter: &TensorFilter, tolerance: f64) -> Result<ZeroCensus> {
    let run = || -> Result<ZeroCensus> {
        let container = Container::open(&entry.path)?;
        zero_census(&container, &container.infos(filter), tolerance, &Sequential)
    };
    run().map_err(|e| Error::SeriesEntry {
        iteration: entry.iteration,
        path: entry.path.clone(),
        source: Box::new(e),
    })
}

/// One census per checkpoint, in iteration order. Checkpoints are processed
/// concurrently on the current rayon pool.
pub fn census_series(
    series: &CheckpointSeries,
    filter: &TensorFilter,
    tolerance: f64,
) -> Result<Vec<(u64, ZeroCensus)>> {
    let results: Vec<Result<ZeroCensus>> = series
        .entries
        .par_iter()
        .map(|e| census_entry(e, filter, tolerance))
        .collect();
    series
        .entries
        .iter()
        .zip(results)
        .map(|(e, r)| r.map(|c| (e.iteration, c)))
        .collect()
}

/// Zero fraction per iteration.
pub fn fractions(censuses: &[(u64, ZeroCensus)]) -> Vec<(u64, f64)> {
    census_fractions(censuses)
}

pub fn write_fractions_csv<W: std::io::Write>(out: W, fractions: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "zero_fraction"])?;
    for (it, f) in fractions {
        w.write_record([it.to_string(), format!("{f:?}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_fractions_csv(text: &str) -> Result<Vec<(u64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["iteration", "zero_fraction"] {
        return Err(Error::Manifest(
            "expected header 'iteration,zero_fraction'".into(),
        ));
    }
    let mut out = Vec::new();
    for record in reader.deserialize::<(u64, f64)>() {
        out.push(record?);
    }
    Ok(out)
}
