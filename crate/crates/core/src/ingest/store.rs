//! On-disk partitioned store.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.json          content hashes of ingested files, partition row counts
//! <root>/<model>/<year>.csv     Backblaze-schema CSV, one row per drive-day
//! ```
//!
//! Model names are percent-encoded when they contain characters outside
//! `[A-Za-z0-9._-]`. Partition files are valid Backblaze CSVs, so any tool that
//! reads the original logs can read the store directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{self, DriveDayRecord};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Identifies one partition: all rows of one drive model within one calendar year.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionKey {
    pub model: String,
    pub year: i32,
}

impl PartitionKey {
    pub fn new(model: impl Into<String>, year: i32) -> Result<Self> {
        if !(2013..=2099).contains(&year) {
            return Err(Error::domain(format!("partition year {year} outside 2013..=2099")));
        }
        Ok(PartitionKey {
            model: model.into(),
            year,
        })
    }

    fn manifest_key(&self) -> String {
        format!("{}/{}", encode_component(&self.model), self.year)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestedFile {
    pub path: String,
    pub model_filter: Option<String>,
    pub records_read: u64,
    pub records_kept: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub model: String,
    pub year: i32,
    pub rows: u64,
    /// Attribute numbers present as columns in the partition file.
    pub attributes: Vec<u16>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Keyed by SHA-256 of the file contents (suffixed with `:<model>` when a
    /// model filter was applied).
    pub files: BTreeMap<String, IngestedFile>,
    pub partitions: BTreeMap<String, PartitionEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            files: BTreeMap::new(),
            partitions: BTreeMap::new(),
        }
    }
}

/// Handle to a store rooted at a directory.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (or prepares to create) a store. The directory is created on first write.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn partition_path(&self, key: &PartitionKey) -> PathBuf {
        self.root
            .join(encode_component(&key.model))
            .join(format!("{}.csv", key.year))
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        let path = self.root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::schema(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub(crate) fn save_manifest(&self, manifest: &Manifest) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        write_atomic(&path, &bytes)
    }

    /// Partitions currently recorded in the manifest.
    pub fn partitions(&self) -> Result<Vec<PartitionKey>> {
        Ok(self
            .load_manifest()?
            .partitions
            .values()
            .map(|p| PartitionKey {
                model: p.model.clone(),
                year: p.year,
            })
            .collect())
    }

    /// Reads every record of a partition in file order.
    pub fn read_partition(&self, key: &PartitionKey) -> Result<Vec<DriveDayRecord>> {
        let path = self.partition_path(key);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let parsed = schema::read_csv(&path, BufReader::new(file), |_| true)?;
        if parsed.malformed > 0 {
            return Err(Error::schema(format!(
                "{}: {} corrupt rows in partition",
                path.display(),
                parsed.malformed
            )));
        }
        Ok(parsed.records)
    }

    /// Appends records to one partition, widening its column set if needed.
    /// Returns the partition's new row count and attribute list.
    pub(crate) fn append_partition(
        &self,
        key: &PartitionKey,
        existing: Option<&PartitionEntry>,
        records: &[DriveDayRecord],
    ) -> Result<PartitionEntry> {
        let path = self.partition_path(key);
        let dir = path.parent().expect("partition has a parent directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let incoming: BTreeSet<u16> = records.iter().flat_map(schema::attributes_of).collect();
        let current: BTreeSet<u16> = existing
            .map(|p| p.attributes.iter().copied().collect())
            .unwrap_or_default();
        let prior_rows = existing.map_or(0, |p| p.rows);

        if existing.is_some() && path.exists() && incoming.is_subset(&current) {
            let attributes: Vec<u16> = current.into_iter().collect();
            let file = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(BufWriter::new(file));
            for rec in records {
                w.write_record(schema::row_for(rec, &attributes))
                    .map_err(|e| csv_write_error(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            return Ok(PartitionEntry {
                model: key.model.clone(),
                year: key.year,
                rows: prior_rows + records.len() as u64,
                attributes,
            });
        }

        // Column set grows: rewrite the whole partition under the union header.
        let mut all = if existing.is_some() && path.exists() {
            self.read_partition(key)?
        } else {
            Vec::new()
        };
        all.extend_from_slice(records);
        let attributes: Vec<u16> = current.union(&incoming).copied().collect();
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(schema::header_for(&attributes))
                .map_err(|e| csv_write_error(&path, e))?;
            for rec in &all {
                w.write_record(schema::row_for(rec, &attributes))
                    .map_err(|e| csv_write_error(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        write_atomic(&path, &buf)?;
        Ok(PartitionEntry {
            model: key.model.clone(),
            year: key.year,
            rows: all.len() as u64,
            attributes,
        })
    }

    pub(crate) fn manifest_key(key: &PartitionKey) -> String {
        key.manifest_key()
    }
}

fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(format!("{}: {:?}", path.display(), other)),
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Filesystem-safe directory name for a model identifier.
pub fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.starts_with('.') {
        out.replace_range(0..1, "%2E");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_are_path_safe() {
        assert_eq!(encode_component("ST4000DM000"), "ST4000DM000");
        assert_eq!(encode_component("HGST HMS5C4040BLE640"), "HGST%20HMS5C4040BLE640");
        assert_eq!(encode_component("a/b"), "a%2Fb");
        assert_eq!(encode_component(".."), "%2E.");
    }

    #[test]
    fn partition_year_bounds() {
        assert!(PartitionKey::new("M", 2013).is_ok());
        assert!(PartitionKey::new("M", 2099).is_ok());
        assert!(PartitionKey::new("M", 2012).is_err());
        assert!(PartitionKey::new("M", 2100).is_err());
    }
}
