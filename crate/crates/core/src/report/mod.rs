//! Descriptive statistics and plot-data exports: duration summaries,
//! boxplot numbers, correlation matrix, feature histograms, category counts
//! and prediction series.

mod stats;
pub mod svg;

use std::io::Write;

use thiserror::Error;

pub use stats::{
    correlation_matrix, five_number, histogram, prediction_series, quantile_sorted, sorted_copy,
    summary_stats, CorrelationMatrix, FiveNumber, HistogramBin, SeriesPoint, SummaryStats,
};

/// Bin count for the feature distribution exports.
pub const HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("EmptyInput: no values")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("TooFewRows: {0} rows, at least 2 required")]
    TooFewRows(usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_correlation_csv<W: Write>(out: W, m: &CorrelationMatrix) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(m.names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in m.names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..m.names.len()).map(|j| m.get(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: W, bins: &[HistogramBin]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lower", "upper", "count", "density"])?;
    for b in bins {
        w.write_record([
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            b.density.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of each distinct value, ascending by value.
pub fn category_counts(values: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in sorted_copy(values) {
        match out.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

pub fn write_series_csv<W: Write>(
    out: W,
    series: &[SeriesPoint],
    branch: Option<&[&str]>,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    if branch.is_some() {
        w.write_record(["index", "actual_minutes", "predicted_minutes", "branch"])?;
    } else {
        w.write_record(["index", "actual_minutes", "predicted_minutes"])?;
    }
    for (k, p) in series.iter().enumerate() {
        let mut rec = vec![p.index.to_string(), p.actual.to_string(), p.predicted.to_string()];
        if let Some(b) = branch {
            rec.push(b[k].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
