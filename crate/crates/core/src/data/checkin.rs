//! Check-in records and the delimited text format.
//!
//! One check-in per row:
//!
//! ```text
//! user_id,poi_id,utc_time,lat,lon[,tz_offset_minutes]
//! ```
//!
//! `utc_time` is ISO-8601 / RFC 3339. When the offset column is missing or
//! empty the local time falls back to the longitude band,
//! `round(lon / 15)` hours.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::flashback::GeoPoint;

pub const HEADER: [&str; 6] = ["user_id", "poi_id", "utc_time", "lat", "lon", "tz_offset_minutes"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    pub utc_time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub tz_offset_minutes: Option<i32>,
    pub local_time: NaiveDateTime,
}

impl CheckIn {
    pub fn new(
        user_id: impl Into<String>,
        poi_id: impl Into<String>,
        utc_time: DateTime<Utc>,
        lat: f64,
        lon: f64,
        tz_offset_minutes: Option<i32>,
    ) -> Result<Self> {
        GeoPoint::new(lat, lon)?;
        let offset = tz_offset_minutes.unwrap_or_else(|| longitude_offset_minutes(lon));
        Ok(Self {
            user_id: user_id.into(),
            poi_id: poi_id.into(),
            utc_time,
            lat,
            lon,
            tz_offset_minutes,
            local_time: utc_time.naive_utc() + Duration::minutes(offset as i64),
        })
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }

    /// Offset actually applied to get local time.
    pub fn effective_offset_minutes(&self) -> i32 {
        self.tz_offset_minutes
            .unwrap_or_else(|| longitude_offset_minutes(self.lon))
    }
}

/// Whole-hour offset of the 15° longitude band containing `lon`.
pub fn longitude_offset_minutes(lon: f64) -> i32 {
    (lon / 15.0).round() as i32 * 60
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub accepted: usize,
    /// Rows dropped for latitude/longitude out of range, with their line numbers.
    pub rejected_coordinates: Vec<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub checkins: Vec<CheckIn>,
    pub report: IngestReport,
}

pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

pub fn ingest(path: &Path, options: IngestOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, path, options)
}

/// Parse check-ins from any reader. `origin` only labels error messages.
pub fn ingest_reader<R: Read>(reader: R, origin: &Path, options: IngestOptions) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Ingested::default();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.report.rows_read += 1;
        if record.len() != 5 && record.len() != 6 {
            return Err(parse_err(
                line,
                format!("expected 5 or 6 fields, found {}", record.len()),
            ));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let utc = parse_utc(field(2)).ok_or_else(|| parse_err(line, format!("bad utc_time `{}`", field(2))))?;
        let number = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad {name} `{}`", field(i))))
        };
        let lat = number(3, "lat")?;
        let lon = number(4, "lon")?;
        let tz = match record.get(5) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<i32>()
                    .map_err(|_| parse_err(line, format!("bad tz_offset_minutes `{s}`")))?,
            ),
        };
        if field(0).is_empty() || field(1).is_empty() {
            return Err(parse_err(line, "empty user_id or poi_id".into()));
        }
        match CheckIn::new(field(0), field(1), utc, lat, lon, tz) {
            Ok(c) => out.checkins.push(c),
            Err(Error::Input(_)) => out.report.rejected_coordinates.push(line),
            Err(e) => return Err(e),
        }
    }
    out.report.accepted = out.checkins.len();
    if out.report.rows_read == 0 {
        let msg = format!("{}: no check-ins found", origin.display());
        log::warn!("{msg}");
        out.report.warnings.push(msg);
    }
    if !out.report.rejected_coordinates.is_empty() {
        let msg = format!(
            "{}: rejected {} rows with out-of-range coordinates",
            origin.display(),
            out.report.rejected_coordinates.len()
        );
        log::warn!("{msg}");
        out.report.warnings.push(msg);
    }
    Ok(out)
}

pub fn write_checkins<W: Write>(writer: W, checkins: &[CheckIn]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for c in checkins {
        w.write_record([
            c.user_id.clone(),
            c.poi_id.clone(),
            c.utc_time.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            c.lat.to_string(),
            c.lon.to_string(),
            c.tz_offset_minutes.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkins(path: &Path, checkins: &[CheckIn]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkins(std::io::BufWriter::new(file), checkins)
}
