//! Ingestion of Backblaze daily logs into the partitioned store, plus the
//! failure census and per-drive extraction queries that run against it.

mod schema;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use schema::{parse_date, read_csv, DriveDayRecord, ParsedFile, REQUIRED_COLUMNS};
pub use store::{
    encode_component, write_atomic, IngestedFile, Manifest, PartitionEntry, PartitionKey, Store,
    MANIFEST_FILE,
};

use crate::error::{Error, Result};

/// Files parsed concurrently before their partitions are written.
const INGEST_CHUNK: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files_read: usize,
    /// Files whose content hash was already in the manifest.
    pub files_skipped: usize,
    pub records_read: u64,
    pub records_kept: u64,
    pub malformed_rows: u64,
    /// Distinct partitions touched by this call, sorted.
    pub partitions: Vec<PartitionKey>,
}

impl IngestSummary {
    pub fn partitions_written(&self) -> usize {
        self.partitions.len()
    }
}

/// Appends the rows of each CSV (optionally restricted to one drive model) to
/// the store. Re-ingesting a file with identical contents is a no-op.
pub fn ingest_csv(
    store: &Store,
    paths: &[PathBuf],
    model_filter: Option<&str>,
) -> Result<IngestSummary> {
    let filter = model_filter.map(str::trim);
    let mut manifest = store.load_manifest()?;
    let mut summary = IngestSummary::default();
    let mut touched = BTreeSet::new();

    for chunk in paths.chunks(INGEST_CHUNK) {
        let parsed: Vec<(PathBuf, String, ParsedFile)> = chunk
            .par_iter()
            .map(|path| {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                let mut key = hex::encode(Sha256::digest(&bytes));
                if let Some(m) = filter {
                    key.push(':');
                    key.push_str(m);
                }
                if manifest.files.contains_key(&key) {
                    return Ok((path.clone(), key, ParsedFile::default()));
                }
                let parsed =
                    schema::read_csv(path, bytes.as_slice(), |r| filter.is_none_or(|m| r.model == m))?;
                Ok((path.clone(), key, parsed))
            })
            .collect::<Result<_>>()?;

        // Group in path order so duplicate (serial, date) rows keep a stable "last".
        let mut groups: BTreeMap<PartitionKey, Vec<DriveDayRecord>> = BTreeMap::new();
        let mut new_files = Vec::new();
        let mut seen_this_chunk = HashSet::new();
        for (path, key, file) in parsed {
            if manifest.files.contains_key(&key) || !seen_this_chunk.insert(key.clone()) {
                info!("skipping already-ingested {}", path.display());
                summary.files_skipped += 1;
                continue;
            }
            summary.files_read += 1;
            summary.records_read += file.rows_read;
            summary.malformed_rows += file.malformed;
            summary.records_kept += file.records.len() as u64;
            if file.malformed > 0 {
                warn!("{}: skipped {} malformed rows", path.display(), file.malformed);
            }
            new_files.push((
                key,
                IngestedFile {
                    path: path.display().to_string(),
                    model_filter: filter.map(str::to_string),
                    records_read: file.rows_read,
                    records_kept: file.records.len() as u64,
                },
            ));
            for rec in file.records {
                let pk = PartitionKey {
                    model: rec.model.clone(),
                    year: rec.year(),
                };
                groups.entry(pk).or_default().push(rec);
            }
        }

        let written: Vec<(PartitionKey, PartitionEntry)> = groups
            .par_iter()
            .map(|(pk, recs)| {
                let existing = manifest.partitions.get(&Store::manifest_key(pk));
                store
                    .append_partition(pk, existing, recs)
                    .map(|entry| (pk.clone(), entry))
            })
            .collect::<Result<_>>()?;
        for (pk, entry) in written {
            manifest.partitions.insert(Store::manifest_key(&pk), entry);
            touched.insert(pk);
        }
        manifest.files.extend(new_files);
        store.save_manifest(&manifest)?;
    }

    summary.partitions = touched.into_iter().collect();
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub model: String,
    pub unique_failures: u64,
}

/// Distinct failed serials per drive model, sorted by descending count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCensus {
    pub entries: Vec<CensusEntry>,
}

impl FailureCensus {
    pub fn count(&self, model: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.model == model)
            .map(|e| e.unique_failures)
    }
}

/// Counts serials with at least one failure record, per model. A serial that
/// appears in several years is counted once. Requested models absent from the
/// store report zero.
pub fn failure_census(store: &Store, models: Option<&[String]>) -> Result<FailureCensus> {
    let wanted: Option<BTreeSet<&str>> = models.map(|m| m.iter().map(String::as_str).collect());
    let partitions: Vec<PartitionKey> = store
        .partitions()?
        .into_iter()
        .filter(|p| wanted.as_ref().is_none_or(|w| w.contains(p.model.as_str())))
        .collect();

    let per_partition: Vec<(String, BTreeSet<String>)> = partitions
        .par_iter()
        .map(|pk| {
            let failed = store
                .read_partition(pk)?
                .into_iter()
                .filter(|r| r.failure)
                .map(|r| r.serial)
                .collect();
            Ok((pk.model.clone(), failed))
        })
        .collect::<Result<_>>()?;

    let mut by_model: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    if let Some(w) = &wanted {
        for m in w {
            by_model.entry(m.to_string()).or_default();
        }
    }
    for (model, serials) in per_partition {
        by_model.entry(model).or_default().extend(serials);
    }
    let mut entries: Vec<CensusEntry> = by_model
        .into_iter()
        .map(|(model, s)| CensusEntry {
            model,
            unique_failures: s.len() as u64,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.unique_failures
            .cmp(&a.unique_failures)
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(FailureCensus { entries })
}

/// Date-ordered raw records for one drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDriveSeries {
    pub serial: String,
    pub model: String,
    pub records: Vec<DriveDayRecord>,
}

impl RawDriveSeries {
    pub fn failed(&self) -> bool {
        self.records.last().is_some_and(|r| r.failure)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    /// One entry per serial, sorted by serial.
    pub drives: Vec<RawDriveSeries>,
    /// Years in the requested range that have no partition.
    pub missing_years: Vec<i32>,
}

impl Extraction {
    /// Set when nothing in the requested range was found.
    pub fn warning(&self) -> bool {
        self.drives.is_empty()
    }
}

/// Groups a model's records by serial across the given years. Within a serial,
/// duplicate dates keep the last stored row and rows after the first failure
/// record are dropped.
pub fn extract_histories(
    store: &Store,
    model: &str,
    years: RangeInclusive<i32>,
) -> Result<Extraction> {
    let manifest = store.load_manifest()?;
    let mut present = Vec::new();
    let mut missing_years = Vec::new();
    for year in years {
        let pk = PartitionKey {
            model: model.to_string(),
            year,
        };
        if manifest.partitions.contains_key(&Store::manifest_key(&pk)) {
            present.push(pk);
        } else {
            missing_years.push(year);
        }
    }
    let per_year: Vec<Vec<DriveDayRecord>> = present
        .par_iter()
        .map(|pk| store.read_partition(pk))
        .collect::<Result<_>>()?;

    let mut by_serial: BTreeMap<String, BTreeMap<chrono::NaiveDate, DriveDayRecord>> =
        BTreeMap::new();
    for rec in per_year.into_iter().flatten() {
        by_serial
            .entry(rec.serial.clone())
            .or_default()
            .insert(rec.date, rec);
    }
    let drives: Vec<RawDriveSeries> = by_serial
        .into_iter()
        .map(|(serial, days)| {
            let mut records: Vec<DriveDayRecord> = Vec::with_capacity(days.len());
            for rec in days.into_values() {
                let failed = rec.failure;
                records.push(rec);
                if failed {
                    break;
                }
            }
            RawDriveSeries {
                serial,
                model: model.to_string(),
                records,
            }
        })
        .collect();
    if drives.is_empty() {
        warn!("no records for model {model} in the requested years");
    }
    Ok(Extraction {
        drives,
        missing_years,
    })
}

/// Convenience for tests and tools: parse a single CSV file from disk.
pub fn read_csv_file(path: &Path) -> Result<ParsedFile> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    schema::read_csv(path, std::io::BufReader::new(file), |_| true)
}

/// Writes records as a Backblaze-schema CSV with the union of their attributes.
pub fn write_csv<'a, W: std::io::Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a DriveDayRecord> + Clone,
) -> Result<()> {
    let attributes: Vec<u16> = records
        .clone()
        .into_iter()
        .flat_map(schema::attributes_of)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::schema(format!("csv write: {e}"));
    w.write_record(schema::header_for(&attributes)).map_err(io)?;
    for rec in records {
        w.write_record(schema::row_for(rec, &attributes)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
