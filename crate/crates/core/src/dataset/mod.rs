//! Sliding windows over labeled histories, and drive-grouped splits.

mod cache;
mod split;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{read_windows, write_windows, WINDOWS_MAGIC, WINDOWS_VERSION};
pub use split::{kfold_by_drive, kfold_serials, split_by_drive, split_serials, DatasetSplits, SplitSpec};

use crate::error::{Error, Result};
use crate::preprocess::{fit_scaler, DriveHistory, FeatureSet, ScalerParams};

/// Window size used when none is given.
pub const DEFAULT_TIMESTEPS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub timesteps: usize,
    pub stride: usize,
    /// Targets are the RUL `horizon` days after each input day. Zero aligns
    /// targets with the input window itself.
    pub horizon: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            timesteps: DEFAULT_TIMESTEPS,
            stride: 1,
            horizon: 0,
        }
    }
}

impl WindowSpec {
    pub fn new(timesteps: usize, stride: usize) -> Self {
        WindowSpec {
            timesteps,
            stride,
            horizon: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::domain("window size must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::domain("window stride must be positive"));
        }
        Ok(())
    }

    /// Start offsets for a history of `len` days.
    pub fn starts(&self, len: usize) -> impl Iterator<Item = usize> {
        let need = self.timesteps + self.horizon;
        let last = len.checked_sub(need);
        let stride = self.stride;
        (0..).map(move |k| k * stride).take_while(move |&s| last.is_some_and(|l| s <= l))
    }
}

/// `[samples x timesteps x features]` inputs with `[samples x timesteps]` RUL
/// targets. Samples are ordered by serial, then start offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub timesteps: usize,
    pub n_features: usize,
    pub horizon: usize,
    /// Attribute order of the feature axis, when known.
    pub features: Vec<u16>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Drive serial of each sample.
    pub groups: Vec<String>,
    /// Offset of each sample's first day within its drive history.
    pub starts: Vec<usize>,
}

/// Outcome of windowing a set of histories.
#[derive(Debug, Clone)]
pub struct Windowed {
    pub dataset: WindowedDataset,
    /// Drives too short to yield a single window.
    pub skipped: Vec<String>,
}

impl WindowedDataset {
    pub fn empty(timesteps: usize, n_features: usize) -> Self {
        WindowedDataset {
            timesteps,
            n_features,
            horizon: 0,
            features: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            groups: Vec::new(),
            starts: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Flattened `timesteps x n_features` input of sample `s`.
    pub fn sample_x(&self, s: usize) -> &[f64] {
        let w = self.timesteps * self.n_features;
        &self.x[s * w..(s + 1) * w]
    }

    pub fn sample_y(&self, s: usize) -> &[f64] {
        &self.y[s * self.timesteps..(s + 1) * self.timesteps]
    }

    /// Target at the last timestep of every sample.
    pub fn final_targets(&self) -> Vec<f64> {
        (0..self.len())
            .map(|s| self.y[(s + 1) * self.timesteps - 1])
            .collect()
    }

    pub fn serials(&self) -> BTreeSet<String> {
        self.groups.iter().cloned().collect()
    }

    /// Samples whose drive is in `serials`, order preserved.
    pub fn subset(&self, serials: &BTreeSet<String>) -> WindowedDataset {
        self.select(|s| serials.contains(&self.groups[s]))
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> WindowedDataset {
        let mut out = WindowedDataset {
            features: self.features.clone(),
            horizon: self.horizon,
            ..WindowedDataset::empty(self.timesteps, self.n_features)
        };
        for s in (0..self.len()).filter(|&s| keep(s)) {
            out.x.extend_from_slice(self.sample_x(s));
            out.y.extend_from_slice(self.sample_y(s));
            out.groups.push(self.groups[s].clone());
            out.starts.push(self.starts[s]);
        }
        out
    }

    /// Applies the scaler to every timestep of every sample.
    pub fn scale(&mut self, scaler: &ScalerParams) -> Result<()> {
        if scaler.len() != self.n_features {
            return Err(Error::domain(format!(
                "scaler has {} features, dataset has {}",
                scaler.len(),
                self.n_features
            )));
        }
        if self.n_features > 0 {
            self.x
                .par_chunks_mut(self.n_features)
                .for_each(|row| scaler.apply_row(row));
        }
        Ok(())
    }
}

/// Cuts every labeled history into windows of `spec.timesteps` consecutive days.
///
/// A drive of `L` days yields `floor((L - T - horizon) / stride) + 1` windows
/// when `L >= T + horizon` and none otherwise (reported in `skipped`).
pub fn make_windows(histories: &[DriveHistory], spec: WindowSpec) -> Result<Windowed> {
    spec.validate()?;
    let n_features = histories.first().map_or(0, |h| h.x.cols());
    for h in histories {
        if !h.is_labeled() {
            return Err(Error::domain(format!("drive {} is not labeled", h.serial)));
        }
        if h.x.cols() != n_features {
            return Err(Error::domain("histories disagree on feature count"));
        }
    }
    let mut order: Vec<&DriveHistory> = histories.iter().collect();
    order.sort_by(|a, b| a.serial.cmp(&b.serial));

    let t = spec.timesteps;
    let per_drive: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = order
        .par_iter()
        .map(|h| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            let mut starts = Vec::new();
            for s in spec.starts(h.len()) {
                x.extend_from_slice(&h.x.as_slice()[s * n_features..(s + t) * n_features]);
                y.extend_from_slice(&h.rul[s + spec.horizon..s + spec.horizon + t]);
                starts.push(s);
            }
            (x, y, starts)
        })
        .collect();

    let mut dataset = WindowedDataset {
        horizon: spec.horizon,
        ..WindowedDataset::empty(t, n_features)
    };
    let mut skipped = Vec::new();
    for (h, (x, y, starts)) in order.iter().zip(per_drive) {
        if starts.is_empty() {
            skipped.push(h.serial.clone());
            continue;
        }
        dataset.x.extend(x);
        dataset.y.extend(y);
        dataset
            .groups
            .extend(std::iter::repeat_n(h.serial.clone(), starts.len()));
        dataset.starts.extend(starts);
    }
    Ok(Windowed { dataset, skipped })
}

/// Scaled, drive-grouped splits and the scaler fitted on the training drives.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub splits: DatasetSplits,
    pub scaler: ScalerParams,
    /// Serials assigned to train, validation and test.
    pub serials: [BTreeSet<String>; 3],
    /// Drives too short for one window.
    pub skipped: Vec<String>,
}

/// Windows every history, splits by drive, fits the scaler on the training
/// drives' full histories only, and scales all three splits with it.
pub fn prepare_splits(
    histories: &[DriveHistory],
    features: &FeatureSet,
    window: WindowSpec,
    split: &SplitSpec,
) -> Result<PreparedSplits> {
    let windowed = make_windows(histories, window)?;
    let serials = split_serials(windowed.dataset.serials(), split)?;
    let train_histories: Vec<DriveHistory> = histories
        .iter()
        .filter(|h| serials[0].contains(&h.serial))
        .cloned()
        .collect();
    let scaler = fit_scaler(&train_histories, features)?;
    let mut parts = serials.clone().map(|s| windowed.dataset.subset(&s));
    for part in &mut parts {
        part.features = features.to_vec();
        part.scale(&scaler)?;
    }
    let [train, val, test] = parts;
    Ok(PreparedSplits {
        splits: DatasetSplits { train, val, test },
        scaler,
        serials,
        skipped: windowed.skipped,
    })
}
