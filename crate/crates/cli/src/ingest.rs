//! Reading a returns CSV (date column, then one column per stock) and
//! screening out stocks that are too short or too stale.

use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use svjump::model::ReturnsPanel;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooFewDays,
    StalePrice,
    MissingValues,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub stock: String,
    pub traded_days: usize,
    pub longest_zero_run: usize,
    pub reason: Option<DropReason>,
}

#[derive(Debug, Clone, Copy)]
pub struct Screening {
    pub min_days: usize,
    pub max_zero_run: usize,
}

fn longest_zero_run(values: &[Option<f64>]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for v in values {
        if *v == Some(0.0) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Dates, stock ids and one column of cells per stock.
type Parsed = (Vec<NaiveDate>, Vec<String>, Vec<Vec<Option<f64>>>);

/// Parses the CSV text; `origin` labels errors.
pub fn parse_returns(text: &str, origin: &str) -> CliResult<Parsed> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{origin}: header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(CliError::Data(format!("{origin}: need a date column and at least one stock column")));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut dates = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{origin}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(CliError::Data(format!(
                "{origin}:{line}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| CliError::Data(format!("{origin}:{line}: date {:?}: {e}", &rec[0])))?;
        if let Some(prev) = dates.last() {
            if date == *prev {
                return Err(CliError::Data(format!("{origin}:{line}: duplicate date {date}")));
            }
            if date < *prev {
                return Err(CliError::Data(format!("{origin}:{line}: date {date} precedes {prev}")));
            }
        }
        dates.push(date);
        for (col, field) in cols.iter_mut().zip(rec.iter().skip(1)) {
            let v = match field {
                "" | "NA" | "NaN" | "nan" => None,
                s => Some(s.parse::<f64>().map_err(|e| {
                    CliError::Data(format!("{origin}:{line}: value {s:?}: {e}"))
                })?),
            };
            col.push(v.filter(|x| x.is_finite()));
        }
    }
    Ok((dates, ids, cols))
}

/// Applies the screening rules and builds the panel from the survivors.
pub fn screen(
    dates: Vec<NaiveDate>,
    ids: Vec<String>,
    cols: Vec<Vec<Option<f64>>>,
    rules: Screening,
) -> CliResult<(ReturnsPanel, Vec<ScreenRow>)> {
    let mut report = Vec::with_capacity(ids.len());
    let mut keep_ids = Vec::new();
    let mut keep = Vec::new();
    for (id, col) in ids.into_iter().zip(cols) {
        let traded_days = col.iter().filter(|v| v.is_some()).count();
        let run = longest_zero_run(&col);
        let reason = if traded_days < rules.min_days {
            Some(DropReason::TooFewDays)
        } else if run > rules.max_zero_run {
            Some(DropReason::StalePrice)
        } else if traded_days < col.len() {
            Some(DropReason::MissingValues)
        } else {
            None
        };
        if reason.is_none() {
            keep_ids.push(id.clone());
            keep.push(col.into_iter().map(|v| v.unwrap_or_default()).collect());
        }
        report.push(ScreenRow {
            stock: id,
            traded_days,
            longest_zero_run: run,
            reason,
        });
    }
    if keep.is_empty() {
        return Err(CliError::Data("no stock survives screening".into()));
    }
    let panel = ReturnsPanel::from_calendar(keep, dates, keep_ids).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((panel, report))
}

pub fn ingest(path: &Path, rules: Screening) -> CliResult<(ReturnsPanel, Vec<ScreenRow>)> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let (dates, ids, cols) = parse_returns(&text, &path.display().to_string())?;
    screen(dates, ids, cols, rules)
}
