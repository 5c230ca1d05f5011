use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::error::{Error, Result};
use crate::ingest::RawDriveSeries;
use crate::tensor::Matrix;

/// Gap-free, time-ordered feature matrix for one drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveHistory {
    pub serial: String,
    pub model: String,
    /// One entry per calendar day, strictly increasing without gaps.
    pub dates: Vec<NaiveDate>,
    /// `dates.len() x features.len()`; no absent values.
    pub x: Matrix<f64>,
    /// RUL in days, aligned with `dates`. Empty until labeled.
    pub rul: Vec<f64>,
    pub failed: bool,
}

impl DriveHistory {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.rul.len() == self.dates.len()
    }
}

/// What [`build_history`] had to invent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryMeta {
    /// Calendar days inserted between observed records.
    pub inserted_days: usize,
    /// Values filled by interpolation or edge extension.
    pub filled_values: usize,
    /// Features with no observation at all, filled with zero.
    pub all_absent: Vec<u16>,
}

/// Expands a raw series to one row per calendar day over `features` and fills
/// every absent value.
///
/// Interior gaps are linearly interpolated on the day axis; leading gaps take
/// the first observed value and trailing gaps the last. A feature never
/// observed is zero throughout and listed in [`HistoryMeta::all_absent`].
pub fn build_history(
    series: &RawDriveSeries,
    features: &FeatureSet,
) -> Result<(DriveHistory, HistoryMeta)> {
    let records = &series.records;
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f.date, l.date),
        _ => return Err(Error::domain(format!("drive {}: no records", series.serial))),
    };
    if features.is_empty() {
        return Err(Error::domain("feature set is empty"));
    }
    if records.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::domain(format!(
            "drive {}: records are not strictly date-increasing",
            series.serial
        )));
    }

    let days = (last - first).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = first.iter_days().take(days).collect();
    let mut meta = HistoryMeta {
        inserted_days: days - records.len(),
        ..Default::default()
    };

    let mut x = Matrix::zeros(days, features.len());
    let mut column = vec![None; days];
    for (c, &attr) in features.iter().enumerate() {
        column.iter_mut().for_each(|v| *v = None);
        for rec in records {
            let day = (rec.date - first).num_days() as usize;
            column[day] = rec.raw(attr);
        }
        let observed = column.iter().filter(|v| v.is_some()).count();
        match fill_linear(&column) {
            Some(filled) => {
                meta.filled_values += days - observed;
                for (r, v) in filled.into_iter().enumerate() {
                    x.set(r, c, v);
                }
            }
            None => meta.all_absent.push(attr),
        }
    }

    Ok((
        DriveHistory {
            serial: series.serial.clone(),
            model: series.model.clone(),
            dates,
            x,
            rul: Vec::new(),
            failed: series.failed(),
        },
        meta,
    ))
}

/// Fills absences in an evenly spaced series. Interior gaps are linear between
/// the nearest observed neighbours; edges copy the nearest observation.
/// Returns `None` when nothing is observed.
pub fn fill_linear(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    out[..first_i].fill(first_v);
    out[last_i..].fill(last_v);
    for pair in known.windows(2) {
        let (i0, v0) = pair[0];
        let (i1, v1) = pair[1];
        out[i0] = v0;
        let span = (i1 - i0) as f64;
        for (k, slot) in out.iter_mut().enumerate().take(i1).skip(i0 + 1) {
            let w = (k - i0) as f64 / span;
            *slot = v0 + (v1 - v0) * w;
        }
    }
    Some(out)
}

/// Attaches RUL labels counted back from the failure day.
///
/// `rul[i]` is the number of whole days between `dates[i]` and the final
/// (failure) day, so the last label is zero.
pub fn label_rul(mut history: DriveHistory) -> Result<DriveHistory> {
    if !history.failed {
        return Err(Error::domain(format!(
            "unlabeled drive {}: no failure observed",
            history.serial
        )));
    }
    let failure_day = *history
        .dates
        .last()
        .ok_or_else(|| Error::domain("empty history"))?;
    history.rul = history
        .dates
        .iter()
        .map(|d| (failure_day - *d).num_days() as f64)
        .collect();
    Ok(history)
}

/// Labels for experiments that admit healthy drives: failed drives get their
/// true RUL truncated at `cap`, healthy drives get `cap` on every day.
pub fn label_rul_capped(history: DriveHistory, cap: f64) -> Result<DriveHistory> {
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::domain(format!("RUL cap must be positive, got {cap}")));
    }
    if history.failed {
        let mut h = label_rul(history)?;
        h.rul.iter_mut().for_each(|r| *r = r.min(cap));
        Ok(h)
    } else {
        let mut h = history;
        h.rul = vec![cap; h.dates.len()];
        Ok(h)
    }
}
