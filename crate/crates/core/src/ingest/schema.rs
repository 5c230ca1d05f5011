//! Backblaze daily-log CSV schema: header discovery and row parsing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns every input file must carry.
pub const REQUIRED_COLUMNS: [&str; 4] = ["date", "serial_number", "model", "failure"];

/// One drive-day of S.M.A.R.T. readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveDayRecord {
    pub date: NaiveDate,
    pub serial: String,
    pub model: String,
    pub capacity_bytes: Option<u64>,
    pub failure: bool,
    /// Raw attribute values keyed by S.M.A.R.T. attribute number. A reading
    /// absent from the log has no entry.
    pub smart: BTreeMap<u16, f64>,
    /// Vendor-normalized values. Kept in the store, never used as features.
    pub smart_normalized: BTreeMap<u16, f64>,
}

impl DriveDayRecord {
    pub fn year(&self) -> i32 {
        self.date.year()
    }

    pub fn raw(&self, attribute: u16) -> Option<f64> {
        self.smart.get(&attribute).copied()
    }
}

/// Parses a calendar day written exactly as `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let digits_ok = b
        .iter()
        .enumerate()
        .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !digits_ok {
        return None;
    }
    let year = s[0..4].parse().ok()?;
    let month = s[5..7].parse().ok()?;
    let day = s[8..10].parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, day)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SmartKind {
    Raw,
    Normalized,
}

/// Column positions discovered from a header row.
#[derive(Debug, Clone)]
pub struct HeaderLayout {
    width: usize,
    date: usize,
    serial: usize,
    model: usize,
    failure: usize,
    capacity: Option<usize>,
    smart: Vec<(usize, u16, SmartKind)>,
}

impl HeaderLayout {
    pub fn from_header(path: &Path, header: &csv::StringRecord) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut smart = Vec::new();
        for (i, name) in header.iter().enumerate() {
            let name = name.trim().trim_start_matches('\u{feff}');
            if let Some((attr, kind)) = parse_smart_column(name) {
                smart.push((i, attr, kind));
            } else {
                index.entry(name.to_string()).or_insert(i);
            }
        }
        let missing: Vec<String> = REQUIRED_COLUMNS
            .iter()
            .filter(|c| !index.contains_key(**c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns {
                path: path.to_path_buf(),
                missing,
            });
        }
        Ok(HeaderLayout {
            width: header.len(),
            date: index["date"],
            serial: index["serial_number"],
            model: index["model"],
            failure: index["failure"],
            capacity: index.get("capacity_bytes").copied(),
            smart,
        })
    }

    /// Parses one data row. `None` marks a malformed row.
    pub fn parse_row(&self, row: &csv::StringRecord) -> Option<DriveDayRecord> {
        if row.len() != self.width {
            return None;
        }
        let date = parse_date(row.get(self.date)?.trim())?;
        if !(2013..=2099).contains(&date.year()) {
            return None;
        }
        let serial = row.get(self.serial)?.trim();
        let model = row.get(self.model)?.trim();
        if serial.is_empty() || model.is_empty() {
            return None;
        }
        let failure = match row.get(self.failure)?.trim() {
            "0" => false,
            "1" => true,
            _ => return None,
        };
        let capacity_bytes = match self.capacity {
            None => None,
            Some(i) => {
                let field = row.get(i)?.trim();
                if field.is_empty() {
                    None
                } else {
                    let v: i64 = field.parse().ok()?;
                    u64::try_from(v).ok()
                }
            }
        };
        let mut smart = BTreeMap::new();
        let mut smart_normalized = BTreeMap::new();
        for &(i, attr, kind) in &self.smart {
            if let Some(value) = parse_value(row.get(i)?)? {
                match kind {
                    SmartKind::Raw => smart.insert(attr, value),
                    SmartKind::Normalized => smart_normalized.insert(attr, value),
                };
            }
        }
        Some(DriveDayRecord {
            date,
            serial: serial.to_string(),
            model: model.to_string(),
            capacity_bytes,
            failure,
            smart,
            smart_normalized,
        })
    }
}

fn parse_smart_column(name: &str) -> Option<(u16, SmartKind)> {
    let rest = name.strip_prefix("smart_")?;
    let (num, suffix) = rest.split_once('_')?;
    let kind = match suffix {
        "raw" => SmartKind::Raw,
        "normalized" => SmartKind::Normalized,
        _ => return None,
    };
    Some((num.parse().ok()?, kind))
}

/// Empty field is an absent reading; non-finite numbers are treated as absent.
/// An unparsable field yields `None` (malformed).
fn parse_value(field: &str) -> Option<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Some(None);
    }
    let v: f64 = field.parse().ok()?;
    Some(v.is_finite().then_some(v))
}

/// Result of reading one CSV source.
#[derive(Debug, Default)]
pub struct ParsedFile {
    pub rows_read: u64,
    pub malformed: u64,
    pub records: Vec<DriveDayRecord>,
}

/// Reads every row of a Backblaze-schema CSV. Rows failing `keep` are counted
/// but not returned.
pub fn read_csv<R: Read>(
    path: &Path,
    reader: R,
    keep: impl Fn(&DriveDayRecord) -> bool,
) -> Result<ParsedFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .clone();
    let layout = HeaderLayout::from_header(path, &header)?;
    let mut out = ParsedFile::default();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                out.rows_read += 1;
                match layout.parse_row(&row) {
                    Some(rec) if keep(&rec) => out.records.push(rec),
                    Some(_) => {}
                    None => out.malformed += 1,
                }
            }
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                return Err(csv_error(path, e));
            }
            Err(_) => {
                out.rows_read += 1;
                out.malformed += 1;
            }
        }
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(format!("{}: {:?}", path.display(), other)),
    }
}

/// Header for a stored partition carrying the given attribute numbers.
pub fn header_for(attributes: &[u16]) -> Vec<String> {
    let mut cols: Vec<String> = ["date", "serial_number", "model", "capacity_bytes", "failure"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for a in attributes {
        cols.push(format!("smart_{a}_normalized"));
        cols.push(format!("smart_{a}_raw"));
    }
    cols
}

/// Serializes a record against a partition's attribute list, matching [`header_for`].
pub fn row_for(rec: &DriveDayRecord, attributes: &[u16]) -> Vec<String> {
    let mut out = Vec::with_capacity(5 + 2 * attributes.len());
    out.push(rec.date.format("%Y-%m-%d").to_string());
    out.push(rec.serial.clone());
    out.push(rec.model.clone());
    out.push(rec.capacity_bytes.map(|c| c.to_string()).unwrap_or_default());
    out.push(if rec.failure { "1" } else { "0" }.to_string());
    for a in attributes {
        out.push(format_value(rec.smart_normalized.get(a).copied()));
        out.push(format_value(rec.smart.get(a).copied()));
    }
    out
}

/// Shortest representation that parses back to the same `f64`.
fn format_value(v: Option<f64>) -> String {
    let mut s = String::new();
    if let Some(v) = v {
        write!(s, "{v}").unwrap();
    }
    s
}

/// Attribute numbers mentioned by a record (raw or normalized).
pub fn attributes_of(rec: &DriveDayRecord) -> impl Iterator<Item = u16> + '_ {
    rec.smart.keys().chain(rec.smart_normalized.keys()).copied()
}
