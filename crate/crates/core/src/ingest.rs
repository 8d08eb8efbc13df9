//! Accident CSV parsing and study-population filtering.
//!
//! Columns are looked up by header name, so their order in the file does not
//! matter. Rows whose `ID`, `Start_Time` or `End_Time` cannot be read, or
//! whose present optional cells fail to parse, become [`RowDiagnostic`]s
//! instead of records.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ACCIDENT_COLUMNS, POI_COLUMNS, SOURCE_COLUMN, TWILIGHT_COLUMNS};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// Source cell value of the MapQuest feed in public exports.
pub const DEFAULT_SOURCE_TAG: &str = "Source1";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("MissingHeader: {0}")]
    MissingHeader(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderPolicy {
    /// Every column of the accident table must be present, matched exactly.
    #[default]
    Strict,
    /// Only `ID`, `Start_Time` and `End_Time` are required; names are trimmed
    /// and compared case-insensitively.
    Lenient,
}

/// One observed value of a modelling column.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Flag(bool),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAccidentRecord {
    pub id: String,
    pub source_tag: Option<String>,
    pub severity: Option<u8>,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub state: Option<String>,
    pub distance_mi: Option<f64>,
    pub temperature_f: Option<f64>,
    pub wind_chill_f: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub pressure_in: Option<f64>,
    pub visibility_mi: Option<f64>,
    pub wind_direction: Option<String>,
    pub wind_speed_mph: Option<f64>,
    pub precipitation_in: Option<f64>,
    pub weather_condition: Option<String>,
    /// Point-of-interest flags in [`POI_COLUMNS`] order.
    pub poi: [Option<bool>; 13],
    /// Day/Night cells in [`TWILIGHT_COLUMNS`] order.
    pub twilight: [Option<String>; 4],
}

impl RawAccidentRecord {
    /// A record with the mandatory fields set and everything else absent.
    pub fn new(id: impl Into<String>, start_time: NaiveDateTime, end_time: NaiveDateTime) -> Self {
        Self {
            id: id.into(),
            source_tag: None,
            severity: None,
            start_time,
            end_time,
            state: None,
            distance_mi: None,
            temperature_f: None,
            wind_chill_f: None,
            humidity_pct: None,
            pressure_in: None,
            visibility_mi: None,
            wind_direction: None,
            wind_speed_mph: None,
            precipitation_in: None,
            weather_condition: None,
            poi: [None; 13],
            twilight: Default::default(),
        }
    }

    /// Value of a modelling column by its header name, `None` when absent.
    pub fn feature(&self, name: &str) -> Option<RawValue> {
        let num = |v: Option<f64>| v.map(RawValue::Number);
        let text = |v: &Option<String>| v.clone().map(RawValue::Text);
        match name {
            "Distance(mi)" => num(self.distance_mi),
            "Temperature(F)" => num(self.temperature_f),
            "Wind_Chill(F)" => num(self.wind_chill_f),
            "Humidity(%)" => num(self.humidity_pct),
            "Pressure(in)" => num(self.pressure_in),
            "Visibility(mi)" => num(self.visibility_mi),
            "Wind_Speed(mph)" => num(self.wind_speed_mph),
            "Precipitation(in)" => num(self.precipitation_in),
            "Wind_Direction" => text(&self.wind_direction),
            "Weather_Condition" => text(&self.weather_condition),
            _ => {
                if let Some(i) = POI_COLUMNS.iter().position(|c| *c == name) {
                    self.poi[i].map(RawValue::Flag)
                } else if let Some(i) = TWILIGHT_COLUMNS.iter().position(|c| *c == name) {
                    text(&self.twilight[i])
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    /// 1-based line in the input file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedBatch {
    pub records: Vec<RawAccidentRecord>,
    pub diagnostics: Vec<RowDiagnostic>,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn normalize_header(name: &str) -> String {
    name.trim().to_ascii_lowercase()
}

/// Maps known column names to their position in the file header.
struct HeaderIndex {
    positions: HashMap<&'static str, usize>,
}

impl HeaderIndex {
    fn build(header: &csv::StringRecord, policy: HeaderPolicy) -> Result<Self, IngestError> {
        if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
            return Err(IngestError::MissingHeader("no header row".into()));
        }
        let known = ACCIDENT_COLUMNS.iter().chain(std::iter::once(&SOURCE_COLUMN));
        let mut positions = HashMap::new();
        for &col in known {
            let found = header.iter().position(|h| match policy {
                HeaderPolicy::Strict => h == col,
                HeaderPolicy::Lenient => normalize_header(h) == normalize_header(col),
            });
            if let Some(pos) = found {
                positions.insert(col, pos);
            }
        }
        let required: &[&str] = match policy {
            HeaderPolicy::Strict => &ACCIDENT_COLUMNS,
            HeaderPolicy::Lenient => &["ID", "Start_Time", "End_Time"],
        };
        let missing: Vec<&str> = required
            .iter()
            .copied()
            .filter(|c| !positions.contains_key(c))
            .collect();
        if !missing.is_empty() {
            return Err(IngestError::MissingHeader(format!(
                "required column(s) absent: {}",
                missing.join(", ")
            )));
        }
        Ok(Self { positions })
    }

    fn cell<'r>(&self, row: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        let pos = *self.positions.get(col)?;
        row.get(pos).map(str::trim).filter(|s| !s.is_empty())
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn parse_row(idx: &HeaderIndex, row: &csv::StringRecord) -> Result<RawAccidentRecord, String> {
    let id = idx.cell(row, "ID").ok_or("ID is empty")?.to_string();
    let start = idx.cell(row, "Start_Time").ok_or("Start_Time is empty")?;
    let start_time = parse_timestamp(start).ok_or_else(|| format!("bad Start_Time {start:?}"))?;
    let end = idx.cell(row, "End_Time").ok_or("End_Time is empty")?;
    let end_time = parse_timestamp(end).ok_or_else(|| format!("bad End_Time {end:?}"))?;

    let number = |col: &str| -> Result<Option<f64>, String> {
        match idx.cell(row, col) {
            None => Ok(None),
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(format!("bad number in {col}: {s:?}")),
            },
        }
    };
    let text = |col: &str| idx.cell(row, col).map(str::to_string);

    let mut rec = RawAccidentRecord::new(id, start_time, end_time);
    rec.source_tag = text(SOURCE_COLUMN);
    rec.severity = match idx.cell(row, "Severity") {
        None => None,
        Some(s) => match s.parse::<u8>() {
            Ok(v @ 1..=4) => Some(v),
            _ => return Err(format!("bad Severity {s:?}")),
        },
    };
    rec.state = text("State");
    rec.distance_mi = number("Distance(mi)")?;
    rec.temperature_f = number("Temperature(F)")?;
    rec.wind_chill_f = number("Wind_Chill(F)")?;
    rec.humidity_pct = number("Humidity(%)")?;
    rec.pressure_in = number("Pressure(in)")?;
    rec.visibility_mi = number("Visibility(mi)")?;
    rec.wind_direction = text("Wind_Direction");
    rec.wind_speed_mph = number("Wind_Speed(mph)")?;
    rec.precipitation_in = number("Precipitation(in)")?;
    rec.weather_condition = text("Weather_Condition");
    for (slot, col) in rec.poi.iter_mut().zip(POI_COLUMNS) {
        *slot = match idx.cell(row, col) {
            None => None,
            Some(s) => Some(parse_bool(s).ok_or_else(|| format!("bad flag in {col}: {s:?}"))?),
        };
    }
    for (slot, col) in rec.twilight.iter_mut().zip(TWILIGHT_COLUMNS) {
        *slot = text(col);
    }
    Ok(rec)
}

/// Parse an accident CSV into records plus per-row diagnostics.
///
/// Every data row yields exactly one record or one diagnostic. Duplicate IDs
/// after the first occurrence are reported as diagnostics.
pub fn parse_records<R: Read>(input: R, policy: HeaderPolicy) -> Result<ParsedBatch, IngestError> {
    parse_records_where(input, policy, |_| true)
}

/// [`parse_records`], keeping only records that satisfy `keep`. Rejected
/// records are dropped silently and do not take part in duplicate detection,
/// so a large file can be filtered without holding all of it.
pub fn parse_records_where<R: Read, F: FnMut(&RawAccidentRecord) -> bool>(
    input: R,
    policy: HeaderPolicy,
    mut keep: F,
) -> Result<ParsedBatch, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => return Err(e.into()),
        Err(_) => return Err(IngestError::MissingHeader("unreadable header row".into())),
    };
    let idx = HeaderIndex::build(&header, policy)?;

    let mut batch = ParsedBatch::default();
    let mut seen = HashSet::new();
    let mut row = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                line = row.position().map(|p| p.line()).unwrap_or(line + 1);
                if row.len() != header.len() {
                    batch.diagnostics.push(RowDiagnostic {
                        line,
                        reason: format!("expected {} fields, found {}", header.len(), row.len()),
                    });
                    continue;
                }
                match parse_row(&idx, &row) {
                    Ok(rec) if !keep(&rec) => {}
                    Ok(rec) => {
                        if seen.insert(rec.id.clone()) {
                            batch.records.push(rec);
                        } else {
                            batch.diagnostics.push(RowDiagnostic {
                                line,
                                reason: format!("duplicate ID {:?}", rec.id),
                            });
                        }
                    }
                    Err(reason) => batch.diagnostics.push(RowDiagnostic { line, reason }),
                }
            }
            Err(e) => {
                line = e.position().map(|p| p.line()).unwrap_or(line + 1);
                batch.diagnostics.push(RowDiagnostic {
                    line,
                    reason: e.to_string(),
                });
                if !matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(batch)
}

/// Write records back out with the full accident header plus `Source`.
/// Columns the record does not carry are left empty.
pub fn write_records<W: Write>(out: W, records: &[RawAccidentRecord]) -> Result<(), IngestError> {
    let mut header: Vec<&str> = Vec::with_capacity(ACCIDENT_COLUMNS.len() + 1);
    header.push(ACCIDENT_COLUMNS[0]);
    header.push(SOURCE_COLUMN);
    header.extend_from_slice(&ACCIDENT_COLUMNS[1..]);

    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    let mut cells: Vec<String> = Vec::with_capacity(header.len());
    for rec in records {
        cells.clear();
        for col in &header {
            cells.push(record_cell(rec, col));
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

fn record_cell(rec: &RawAccidentRecord, col: &str) -> String {
    let opt = |v: &Option<String>| v.clone().unwrap_or_default();
    match col {
        "ID" => rec.id.clone(),
        "Source" => opt(&rec.source_tag),
        "Severity" => rec.severity.map(|s| s.to_string()).unwrap_or_default(),
        "Start_Time" => format_timestamp(&rec.start_time),
        "End_Time" => format_timestamp(&rec.end_time),
        "State" => opt(&rec.state),
        _ => match rec.feature(col) {
            None => String::new(),
            Some(RawValue::Number(v)) => v.to_string(),
            Some(RawValue::Flag(b)) => if b { "True" } else { "False" }.to_string(),
            Some(RawValue::Text(s)) => s,
        },
    }
}

/// Which records belong to the study population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub state_code: String,
    /// `None` accepts every feed.
    pub source_tag: Option<String>,
    pub date_min: NaiveDateTime,
    pub date_max: NaiveDateTime,
}

impl Default for FilterSpec {
    fn default() -> Self {
        let day = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        Self {
            state_code: "TX".into(),
            source_tag: Some(DEFAULT_SOURCE_TAG.into()),
            date_min: day(2016, 2, 1).and_hms_opt(0, 0, 0).expect("valid time"),
            date_max: day(2021, 12, 31)
                .and_hms_nano_opt(23, 59, 59, 999_999_999)
                .expect("valid time"),
        }
    }
}

impl FilterSpec {
    pub fn accepts(&self, rec: &RawAccidentRecord) -> bool {
        rec.state.as_deref() == Some(self.state_code.as_str())
            && self
                .source_tag
                .as_ref()
                .is_none_or(|tag| rec.source_tag.as_ref() == Some(tag))
            && self.date_min <= rec.start_time
            && rec.start_time <= self.date_max
    }
}

/// Keep the records accepted by `spec`, preserving order.
pub fn filter_records(records: &[RawAccidentRecord], spec: &FilterSpec) -> Vec<RawAccidentRecord> {
    records.iter().filter(|r| spec.accepts(r)).cloned().collect()
}
