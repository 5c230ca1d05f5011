//! Metrics, evaluation reports and the experiment sweeps.

mod sweep;

use serde::{Deserialize, Serialize};

pub use sweep::{
    config_sweep, generalize, generalize_histories, window_sweep, write_fig6_csv, write_predictions_csv,
    write_table4_csv, write_table5_csv, FoldResult, PointStatus, SweepAxis, SweepPoint, SweepReport,
    TargetPopulation, WindowSweepSpec,
};

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::seqnet::AnyCheckpoint;

fn check_pair(y: &[f64], yhat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::domain(format!(
            "metric inputs differ in length: {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < min_len {
        return Err(Error::domain(format!("metric needs at least {min_len} values")));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Root mean squared error.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 1)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Coefficient of determination, `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 2)?;
    let ybar = mean(y);
    let ss_tot: f64 = y.iter().map(|a| (a - ybar) * (a - ybar)).sum();
    if ss_tot == 0.0 {
        return Err(Error::domain("undefined R² for constant targets"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Where a report's numbers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub drive_model: String,
    pub config_id: Option<usize>,
    pub timesteps: usize,
    /// `train`, `val`, `test`, `all`, or `fold<k>` variants.
    pub split: String,
}

/// One final-step prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub serial: String,
    pub start: usize,
    pub expected: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub context: EvalContext,
    pub rmse: f64,
    /// `None` when every expected value is equal.
    pub r2: Option<f64>,
    pub n: usize,
    pub predictions: Vec<PredictionPair>,
}

impl EvalReport {
    pub fn from_predictions(context: EvalContext, predictions: Vec<PredictionPair>) -> Result<Self> {
        let y: Vec<f64> = predictions.iter().map(|p| p.expected).collect();
        let yhat: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
        let rmse = rmse(&y, &yhat)?;
        let r2 = r2(&y, &yhat).ok();
        Ok(EvalReport {
            context,
            rmse,
            r2,
            n: predictions.len(),
            predictions,
        })
    }

    /// Recomputes RMSE from the stored pairs.
    pub fn recomputed_rmse(&self) -> Result<f64> {
        let (y, yhat): (Vec<f64>, Vec<f64>) =
            self.predictions.iter().map(|p| (p.expected, p.predicted)).unzip();
        rmse(&y, &yhat)
    }
}

/// Final-step predictions of `model` on every window of `ds`.
pub fn predict_pairs(model: &AnyCheckpoint, ds: &WindowedDataset) -> Result<Vec<PredictionPair>> {
    let pred = model.predict_dataset(ds)?;
    let truth = ds.final_targets();
    Ok(ds
        .groups
        .iter()
        .zip(&ds.starts)
        .zip(truth.iter().zip(&pred.last))
        .map(|((serial, &start), (&expected, &predicted))| PredictionPair {
            serial: serial.clone(),
            start,
            expected,
            predicted,
        })
        .collect())
}

/// Scores `model` on a dataset.
pub fn evaluate(model: &AnyCheckpoint, ds: &WindowedDataset, context: EvalContext) -> Result<EvalReport> {
    EvalReport::from_predictions(context, predict_pairs(model, ds)?)
}
