//! CSV input and output in the `date,spot,rate,expiry,moneyness,vol` schema.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::grid::OptionGrid;
use super::surface::SurfaceObservation;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct Row {
    date: String,
    spot: f64,
    rate: f64,
    expiry: f64,
    moneyness: f64,
    vol: f64,
}

/// A date left out of the series and why.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedDate {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub observations: Vec<SurfaceObservation>,
    pub dropped: Vec<DroppedDate>,
}

struct Partial {
    spot: f64,
    rate: f64,
    first_line: u64,
    vols: Vec<Vec<Option<f64>>>,
}

/// Loads a series, dropping incomplete dates with a warning.
pub fn load_series(path: &Path, grid: &OptionGrid) -> Result<Vec<SurfaceObservation>> {
    let report = load_series_with_report(path, grid)?;
    for d in &report.dropped {
        log::warn!("{}: dropping {}: {}", path.display(), d.date, d.reason);
    }
    Ok(report.observations)
}

pub fn load_series_with_report(path: &Path, grid: &OptionGrid) -> Result<LoadReport> {
    let data_err = |line: u64, message: String| Error::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["date", "spot", "rate", "expiry", "moneyness", "vol"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(data_err(
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }

    let n_exp = grid.expiries().len();
    let n_mon = grid.moneyness().len();
    let mut dates: BTreeMap<NaiveDate, Partial> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| data_err(line, format!("malformed row: {e}")))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| data_err(line, format!("bad date {:?}: {e}", row.date)))?;
        if !(row.spot.is_finite() && row.spot > 0.0) {
            return Err(data_err(line, format!("non-positive spot {}", row.spot)));
        }
        if !(row.vol.is_finite() && row.vol > 0.0) {
            return Err(data_err(line, format!("non-positive vol {}", row.vol)));
        }
        if !row.rate.is_finite() {
            return Err(data_err(line, "non-finite rate".into()));
        }
        let (m, j) = grid.locate(row.expiry, row.moneyness).ok_or_else(|| {
            data_err(
                line,
                format!(
                    "(expiry {}, moneyness {}) is not on the grid",
                    row.expiry, row.moneyness
                ),
            )
        })?;
        let entry = dates.entry(date).or_insert_with(|| Partial {
            spot: row.spot,
            rate: row.rate,
            first_line: line,
            vols: vec![vec![None; n_mon]; n_exp],
        });
        if entry.spot != row.spot || entry.rate != row.rate {
            return Err(data_err(
                line,
                format!(
                    "{date}: spot/rate differ from line {} ({} / {})",
                    entry.first_line, entry.spot, entry.rate
                ),
            ));
        }
        if entry.vols[m][j].replace(row.vol).is_some() {
            return Err(data_err(
                line,
                format!("{date}: duplicate cell ({}, {})", row.expiry, row.moneyness),
            ));
        }
    }

    let mut observations = Vec::with_capacity(dates.len());
    let mut dropped = Vec::new();
    for (date, partial) in dates {
        let missing: Vec<String> = partial
            .vols
            .iter()
            .enumerate()
            .flat_map(|(m, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_none())
                    .map(move |(j, _)| format!("({}, {})", grid.expiries()[m], grid.moneyness()[j]))
            })
            .collect();
        if !missing.is_empty() {
            dropped.push(DroppedDate {
                date,
                reason: format!("missing cells {}", missing.join(" ")),
            });
            continue;
        }
        let vols = partial
            .vols
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| v.expect("checked complete"))
                    .collect()
            })
            .collect();
        observations.push(SurfaceObservation::new(
            date,
            partial.spot,
            partial.rate,
            grid.clone(),
            vols,
        )?);
    }
    Ok(LoadReport {
        observations,
        dropped,
    })
}

/// Writes observations in the loader's schema. Numbers use the shortest
/// representation that round-trips exactly.
pub fn write_series(path: &Path, observations: &[SurfaceObservation]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "date,spot,rate,expiry,moneyness,vol")?;
    for obs in observations {
        let date = obs.date.format("%Y-%m-%d");
        for (m, &tau) in obs.grid.expiries().iter().enumerate() {
            for (j, &k) in obs.grid.moneyness().iter().enumerate() {
                writeln!(
                    out,
                    "{date},{:?},{:?},{tau:?},{k:?},{:?}",
                    obs.spot, obs.rate, obs.vols[m][j]
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
