//! Raw per-drive records to clean, labeled, scaled histories.

mod history;
mod scaler;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use history::{build_history, fill_linear, label_rul, label_rul_capped, DriveHistory, HistoryMeta};
pub use scaler::{
    apply_scaler, fit_scaler, invert_scaler, scale_history, ScalerParams, SCALE_HI, SCALE_LO,
};

use crate::error::{Error, Result};
use crate::ingest::RawDriveSeries;

/// Attributes most associated with failure in Seagate drives: read errors,
/// start/stop, reallocation, seek errors, power-on hours, timeouts,
/// temperatures, retracts, load cycles, pending/uncorrectable sectors, CRC
/// errors and lifetime LBAs written/read.
pub const DEFAULT_ATTRIBUTES: [u16; 15] =
    [1, 4, 5, 7, 9, 188, 190, 192, 193, 194, 197, 198, 199, 241, 242];

/// Ordered list of S.M.A.R.T. attribute numbers; fixes the column order of
/// every downstream matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FeatureSetRepr", into = "FeatureSetRepr")]
pub struct FeatureSet {
    attribute_numbers: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSetRepr {
    attribute_numbers: Vec<u16>,
}

impl TryFrom<FeatureSetRepr> for FeatureSet {
    type Error = Error;
    fn try_from(r: FeatureSetRepr) -> Result<Self> {
        FeatureSet::new(r.attribute_numbers)
    }
}

impl From<FeatureSet> for FeatureSetRepr {
    fn from(f: FeatureSet) -> Self {
        FeatureSetRepr {
            attribute_numbers: f.attribute_numbers,
        }
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet {
            attribute_numbers: DEFAULT_ATTRIBUTES.to_vec(),
        }
    }
}

impl FeatureSet {
    pub fn new(attribute_numbers: Vec<u16>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if let Some(d) = attribute_numbers.iter().find(|a| !seen.insert(**a)) {
            return Err(Error::domain(format!("duplicate attribute {d} in feature set")));
        }
        Ok(FeatureSet { attribute_numbers })
    }

    pub fn len(&self) -> usize {
        self.attribute_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attribute_numbers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &u16> {
        self.attribute_numbers.iter()
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.attribute_numbers
    }

    pub fn to_vec(&self) -> Vec<u16> {
        self.attribute_numbers.clone()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("feature set serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }
}

/// How drives without an observed failure are treated when labeling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Labeling {
    /// Only failed drives are labeled; healthy ones are dropped.
    #[default]
    FailedOnly,
    /// Healthy drives are kept with RUL fixed at the cap; failed drives' RUL is
    /// truncated at the cap.
    Capped(f64),
}

/// Builds and labels histories for a set of raw series. Unlabelable drives
/// are skipped; their serials are returned alongside.
pub fn prepare_histories(
    drives: &[RawDriveSeries],
    features: &FeatureSet,
    labeling: Labeling,
) -> Result<(Vec<DriveHistory>, Vec<String>)> {
    use rayon::prelude::*;
    let built: Vec<Option<DriveHistory>> = drives
        .par_iter()
        .map(|d| {
            if d.records.is_empty() {
                return Ok(None);
            }
            let (h, _) = build_history(d, features)?;
            match labeling {
                Labeling::FailedOnly if !h.failed => Ok(None),
                Labeling::FailedOnly => label_rul(h).map(Some),
                Labeling::Capped(cap) => label_rul_capped(h, cap).map(Some),
            }
        })
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (d, h) in drives.iter().zip(built) {
        match h {
            Some(h) => kept.push(h),
            None => skipped.push(d.serial.clone()),
        }
    }
    Ok((kept, skipped))
}
