use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DriveHistory, FeatureSet};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Lower end of the scaled range.
pub const SCALE_LO: f64 = 0.0;
/// Upper end of the scaled range; matches the 0..255 range vendors use.
pub const SCALE_HI: f64 = 255.0;

/// Per-feature min/max fitted on training histories.
///
/// Serialized as `scaler.json`; `serde_json` writes the shortest decimal that
/// parses back to the same `f64`, so a reload is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub features: Vec<u16>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("scaler serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let params: ScalerParams = serde_json::from_slice(&bytes)
            .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.min.len() != self.features.len() || self.max.len() != self.features.len() {
            return Err(Error::schema("scaler min/max length differs from feature list"));
        }
        for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::schema(format!(
                    "scaler feature {}: invalid range [{lo}, {hi}]",
                    self.features[i]
                )));
            }
        }
        Ok(())
    }

    /// Scales one row in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *v = if span > 0.0 {
                SCALE_LO + (SCALE_HI - SCALE_LO) * (*v - lo) / span
            } else {
                SCALE_LO
            };
        }
    }

    /// Undoes [`apply_row`](Self::apply_row). Constant features map back to their value.
    pub fn invert_row(&self, row: &mut [f64]) {
        for ((v, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *v = lo + (*v - SCALE_LO) * span / (SCALE_HI - SCALE_LO);
        }
    }
}

/// Fits per-feature extremes over every row of every training history.
pub fn fit_scaler(train: &[DriveHistory], features: &FeatureSet) -> Result<ScalerParams> {
    if train.is_empty() || train.iter().all(|h| h.is_empty()) {
        return Err(Error::domain("cannot fit scaler on an empty training set"));
    }
    let n = features.len();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for h in train {
        if h.x.cols() != n {
            return Err(Error::domain(format!(
                "drive {} has {} features, scaler expects {n}",
                h.serial,
                h.x.cols()
            )));
        }
        for row in h.x.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
    }
    Ok(ScalerParams {
        features: features.to_vec(),
        min,
        max,
    })
}

/// `255 * (x - min) / (max - min)` per column, without clamping; constant
/// columns map to zero.
pub fn apply_scaler(x: &Matrix<f64>, params: &ScalerParams) -> Result<Matrix<f64>> {
    check_cols(x, params)?;
    let mut out = x.clone();
    for r in 0..out.rows() {
        params.apply_row(out.row_mut(r));
    }
    Ok(out)
}

pub fn invert_scaler(x: &Matrix<f64>, params: &ScalerParams) -> Result<Matrix<f64>> {
    check_cols(x, params)?;
    let mut out = x.clone();
    for r in 0..out.rows() {
        params.invert_row(out.row_mut(r));
    }
    Ok(out)
}

fn check_cols(x: &Matrix<f64>, params: &ScalerParams) -> Result<()> {
    if x.cols() != params.len() {
        return Err(Error::domain(format!(
            "matrix has {} columns, scaler has {}",
            x.cols(),
            params.len()
        )));
    }
    Ok(())
}

/// Scales a history's feature matrix in place.
pub fn scale_history(history: &mut DriveHistory, params: &ScalerParams) -> Result<()> {
    history.x = apply_scaler(&history.x, params)?;
    Ok(())
}
