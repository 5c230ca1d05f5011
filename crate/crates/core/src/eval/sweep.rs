use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, predict_pairs, EvalContext, EvalReport};
use crate::dataset::{kfold_serials, make_windows, DatasetSplits, WindowSpec};
use crate::error::{Error, Result};
use crate::ingest::{extract_histories, Store};
use crate::preprocess::{
    fit_scaler, prepare_histories, scale_history, DriveHistory, FeatureSet, Labeling, ScalerParams,
};
use crate::seqnet::{train_checkpoint, AnyCheckpoint, EncoderDecoderConfig, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Config,
    Window,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "message")]
pub enum PointStatus {
    Ok,
    /// No windows could be cut.
    Empty,
    /// The drive model is not in the store.
    Missing,
    Failed(String),
}

impl PointStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Empty => "empty",
            PointStatus::Missing => "missing",
            PointStatus::Failed(_) => "failed",
        }
    }
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train: EvalReport,
    pub val: EvalReport,
    pub training: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub config_id: Option<usize>,
    pub config: Option<EncoderDecoderConfig>,
    pub timesteps: usize,
    pub status: PointStatus,
    pub reports: Vec<EvalReport>,
    pub folds: Vec<FoldResult>,
    pub training: Option<TrainReport>,
    /// Drives that contributed windows.
    pub n_drives: usize,
}

impl SweepPoint {
    fn new(label: String, timesteps: usize) -> Self {
        SweepPoint {
            label,
            config_id: None,
            config: None,
            timesteps,
            status: PointStatus::Ok,
            reports: Vec::new(),
            folds: Vec::new(),
            training: None,
            n_drives: 0,
        }
    }

    pub fn report(&self, split: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.context.split == split)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub drive_model: String,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// Every report, including per-fold ones, in emission order.
    pub fn all_reports(&self) -> Vec<(&SweepPoint, &EvalReport)> {
        let mut out = Vec::new();
        for p in &self.points {
            for r in &p.reports {
                out.push((p, r));
            }
            for f in &p.folds {
                out.push((p, &f.train));
                out.push((p, &f.val));
            }
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::schema(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

fn context(model: &str, config_id: Option<usize>, timesteps: usize, split: &str) -> EvalContext {
    EvalContext {
        drive_model: model.to_string(),
        config_id,
        timesteps,
        split: split.to_string(),
    }
}

/// Trains every configuration on the same splits and seed.
///
/// A configuration that fails to train is recorded as failed; the remaining
/// rows still run.
pub fn config_sweep(
    splits: &DatasetSplits,
    drive_model: &str,
    configs: &[(usize, EncoderDecoderConfig)],
    tcfg: &TrainConfig,
) -> SweepReport {
    let t = splits.train.timesteps;
    let points = configs
        .iter()
        .map(|(id, cfg)| {
            let mut point = SweepPoint::new(format!("config{id}"), t);
            point.config_id = Some(*id);
            point.config = Some(cfg.clone());
            point.n_drives = splits.train.serials().len() + splits.val.serials().len() + splits.test.serials().len();
            let run = || -> Result<(Vec<EvalReport>, TrainReport)> {
                let (model, report) = train_checkpoint(cfg.clone(), &splits.train, &splits.val, tcfg)?;
                let mut reports = Vec::new();
                for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
                    reports.push(evaluate(&model, ds, context(drive_model, Some(*id), t, name))?);
                }
                Ok((reports, report))
            };
            match run() {
                Ok((reports, training)) => {
                    point.reports = reports;
                    point.training = Some(training);
                }
                Err(e) => {
                    log::warn!("configuration {id} failed: {e}");
                    point.status = PointStatus::Failed(e.to_string());
                }
            }
            point
        })
        .collect();
    SweepReport {
        axis: SweepAxis::Config,
        drive_model: drive_model.to_string(),
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSweepSpec {
    pub timesteps: Vec<usize>,
    pub folds: usize,
    pub stride: usize,
    /// Row of the configuration table trained at every window size.
    pub config_id: usize,
    pub seed: u64,
}

impl Default for WindowSweepSpec {
    fn default() -> Self {
        WindowSweepSpec {
            timesteps: vec![5, 10, 15, 20, 25, 30],
            folds: 5,
            stride: 1,
            config_id: 1,
            seed: 0,
        }
    }
}

fn scaled(histories: &[&DriveHistory], scaler: &ScalerParams) -> Result<Vec<DriveHistory>> {
    histories
        .iter()
        .map(|h| {
            let mut h = (*h).clone();
            scale_history(&mut h, scaler)?;
            Ok(h)
        })
        .collect()
}

fn run_fold(
    histories: &[DriveHistory],
    features: &FeatureSet,
    val_serials: &BTreeSet<String>,
    window: WindowSpec,
    config: &EncoderDecoderConfig,
    tcfg: &TrainConfig,
    fold: usize,
    drive_model: &str,
    config_id: usize,
) -> Result<FoldResult> {
    let (val_h, train_h): (Vec<&DriveHistory>, Vec<&DriveHistory>) =
        histories.iter().partition(|h| val_serials.contains(&h.serial));
    let train_owned: Vec<DriveHistory> = train_h.iter().map(|h| (*h).clone()).collect();
    // Each fold fits its own scaler on its own training drives.
    let scaler = fit_scaler(&train_owned, features)?;
    let mut train_ds = make_windows(&scaled(&train_h, &scaler)?, window)?.dataset;
    let mut val_ds = make_windows(&scaled(&val_h, &scaler)?, window)?.dataset;
    train_ds.features = features.to_vec();
    val_ds.features = features.to_vec();
    let t = window.timesteps;
    let (model, training) = train_checkpoint(config.clone(), &train_ds, &val_ds, tcfg)?;
    let ctx = |split: String| context(drive_model, Some(config_id), t, &split);
    Ok(FoldResult {
        fold,
        train: evaluate(&model, &train_ds, ctx(format!("fold{fold}-train")))?,
        val: evaluate(&model, &val_ds, ctx(format!("fold{fold}-val")))?,
        training,
    })
}

/// For each window size, k-fold cross-validation grouped by drive.
///
/// `histories` are labeled and unscaled. A window size no drive is long
/// enough for is reported as empty.
pub fn window_sweep(
    histories: &[DriveHistory],
    features: &FeatureSet,
    drive_model: &str,
    spec: &WindowSweepSpec,
    tcfg: &TrainConfig,
) -> Result<SweepReport> {
    if spec.timesteps.is_empty() {
        return Err(Error::domain("window sweep needs at least one window size"));
    }
    let unique: BTreeSet<usize> = spec.timesteps.iter().copied().collect();
    if unique.len() != spec.timesteps.len() {
        return Err(Error::domain("window sizes must be distinct"));
    }
    let mut points = Vec::new();
    for &t in &spec.timesteps {
        let mut point = SweepPoint::new(format!("T{t}"), t);
        point.config_id = Some(spec.config_id);
        let window = WindowSpec::new(t, spec.stride);
        let windowed = make_windows(histories, window)?;
        if windowed.dataset.is_empty() {
            point.status = PointStatus::Empty;
            points.push(point);
            continue;
        }
        let serials = windowed.dataset.serials();
        point.n_drives = serials.len();
        let eligible: Vec<DriveHistory> =
            histories.iter().filter(|h| serials.contains(&h.serial)).cloned().collect();
        let outcome = (|| -> Result<()> {
            let config = EncoderDecoderConfig::sweep_row(spec.config_id, features.len(), t)?;
            point.config = Some(config.clone());
            let folds = kfold_serials(serials.iter().cloned(), spec.folds, spec.seed)?;
            for (i, val) in folds.iter().enumerate() {
                let fold = run_fold(&eligible, features, val, window, &config, tcfg, i, drive_model, spec.config_id)?;
                point.folds.push(fold);
            }
            let pooled = point.folds.iter().flat_map(|f| f.val.predictions.iter().cloned()).collect();
            point
                .reports
                .push(EvalReport::from_predictions(context(drive_model, Some(spec.config_id), t, "cv"), pooled)?);
            Ok(())
        })();
        if let Err(e) = outcome {
            log::warn!("window size {t} failed: {e}");
            point.status = PointStatus::Failed(e.to_string());
        }
        points.push(point);
    }
    Ok(SweepReport {
        axis: SweepAxis::Window,
        drive_model: drive_model.to_string(),
        points,
    })
}

/// Labeled, unscaled histories of one target drive model; `None` when the
/// model is not available.
#[derive(Debug, Clone)]
pub struct TargetPopulation {
    pub drive_model: String,
    pub histories: Option<Vec<DriveHistory>>,
}

/// Scores a trained model on other drive populations, scaling them with the
/// source scaler (never refitted).
pub fn generalize_histories(
    model: &AnyCheckpoint,
    scaler: &ScalerParams,
    features: &FeatureSet,
    source_model: &str,
    targets: &[TargetPopulation],
    stride: usize,
) -> Result<SweepReport> {
    if scaler.features != features.as_slice() {
        return Err(Error::domain("scaler and feature set list different attributes"));
    }
    if model.config().input_features != features.len() {
        return Err(Error::domain("model input width differs from the feature set"));
    }
    let t = model.config().timesteps;
    let window = WindowSpec::new(t, stride);
    let mut points = Vec::new();
    for target in targets {
        let mut point = SweepPoint::new(target.drive_model.clone(), t);
        point.config = Some(model.config().clone());
        match &target.histories {
            None => point.status = PointStatus::Missing,
            Some(h) if h.is_empty() => point.status = PointStatus::Missing,
            Some(h) => {
                let refs: Vec<&DriveHistory> = h.iter().collect();
                let mut ds = make_windows(&scaled(&refs, scaler)?, window)?.dataset;
                ds.features = features.to_vec();
                if ds.is_empty() {
                    point.status = PointStatus::Empty;
                } else {
                    point.n_drives = ds.serials().len();
                    let pairs = predict_pairs(model, &ds)?;
                    point.reports.push(EvalReport::from_predictions(
                        context(&target.drive_model, None, t, "all"),
                        pairs,
                    )?);
                }
            }
        }
        points.push(point);
    }
    Ok(SweepReport {
        axis: SweepAxis::Model,
        drive_model: source_model.to_string(),
        points,
    })
}

/// [`generalize_histories`] over failed drives extracted from the store.
pub fn generalize(
    model: &AnyCheckpoint,
    scaler: &ScalerParams,
    features: &FeatureSet,
    source_model: &str,
    target_models: &[String],
    store: &Store,
    years: RangeInclusive<i32>,
    stride: usize,
) -> Result<SweepReport> {
    let mut targets = Vec::new();
    for m in target_models {
        let extraction = extract_histories(store, m, years.clone())?;
        let histories = if extraction.drives.is_empty() {
            log::warn!("drive model {m} has no records in the store");
            None
        } else {
            Some(prepare_histories(&extraction.drives, features, Labeling::FailedOnly)?.0)
        };
        targets.push(TargetPopulation {
            drive_model: m.clone(),
            histories,
        });
    }
    generalize_histories(model, scaler, features, source_model, &targets, stride)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::schema(format!("{}: {e}", path.display()))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Table4Row<'a> {
    config: usize,
    units: usize,
    encoder_layers: usize,
    decoder_layers: usize,
    timesteps: usize,
    train_rmse: Option<f64>,
    val_rmse: Option<f64>,
    test_rmse: Option<f64>,
    test_r2: Option<f64>,
    n_test: Option<usize>,
    best_epoch: Option<usize>,
    stopped_epoch: Option<usize>,
    status: &'a str,
}

/// `config,units,encoder_layers,decoder_layers,timesteps,train_rmse,val_rmse,test_rmse,test_r2,n_test,best_epoch,stopped_epoch,status`
pub fn write_table4_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in &report.points {
        let cfg = p.config.as_ref();
        let rmse = |s: &str| p.report(s).map(|r| r.rmse);
        w.serialize(Table4Row {
            config: p.config_id.unwrap_or(0),
            units: cfg.map_or(0, |c| c.units_per_layer),
            encoder_layers: cfg.map_or(0, |c| c.encoder_layers),
            decoder_layers: cfg.map_or(0, |c| c.decoder_layers),
            timesteps: p.timesteps,
            train_rmse: rmse("train"),
            val_rmse: rmse("val"),
            test_rmse: rmse("test"),
            test_r2: p.report("test").and_then(|r| r.r2),
            n_test: p.report("test").map(|r| r.n),
            best_epoch: p.training.as_ref().map(|t| t.best_epoch),
            stopped_epoch: p.training.as_ref().map(|t| t.stopped_epoch),
            status: p.status.label(),
        })
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

#[derive(Serialize)]
struct Fig6Row {
    timesteps: usize,
    fold: usize,
    epoch: usize,
    train_rmse: f64,
    val_rmse: f64,
}

#[derive(Serialize)]
struct Fig6Summary<'a> {
    timesteps: usize,
    status: &'a str,
    folds: usize,
    mean_train_rmse: Option<f64>,
    mean_val_rmse: Option<f64>,
    cv_rmse: Option<f64>,
}

/// Per-epoch trajectories (`timesteps,fold,epoch,train_rmse,val_rmse`) to
/// `path`, and one summary row per window size to `summary_path`.
pub fn write_fig6_csv(path: &Path, summary_path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in &report.points {
        for f in &p.folds {
            for e in &f.training.epochs {
                w.serialize(Fig6Row {
                    timesteps: p.timesteps,
                    fold: f.fold,
                    epoch: e.epoch,
                    train_rmse: e.train_rmse,
                    val_rmse: e.val_rmse,
                })
                .map_err(csv_err(path))?;
            }
        }
    }
    finish(w, path)?;
    let mut w = csv_writer(summary_path)?;
    for p in &report.points {
        let n = p.folds.len();
        let avg = |f: &dyn Fn(&FoldResult) -> f64| (n > 0).then(|| p.folds.iter().map(f).sum::<f64>() / n as f64);
        w.serialize(Fig6Summary {
            timesteps: p.timesteps,
            status: p.status.label(),
            folds: n,
            mean_train_rmse: avg(&|f| f.train.rmse),
            mean_val_rmse: avg(&|f| f.val.rmse),
            cv_rmse: p.report("cv").map(|r| r.rmse),
        })
        .map_err(csv_err(summary_path))?;
    }
    finish(w, summary_path)
}

#[derive(Serialize)]
struct Table5Row<'a> {
    model: &'a str,
    status: &'a str,
    n_drives: usize,
    n_windows: usize,
    r2: Option<f64>,
    rmse: Option<f64>,
}

/// `model,status,n_drives,n_windows,r2,rmse`
pub fn write_table5_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in &report.points {
        let r = p.report("all");
        w.serialize(Table5Row {
            model: &p.label,
            status: p.status.label(),
            n_drives: p.n_drives,
            n_windows: r.map_or(0, |r| r.n),
            r2: r.and_then(|r| r.r2),
            rmse: r.map(|r| r.rmse),
        })
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    point: &'a str,
    split: &'a str,
    serial: &'a str,
    start: usize,
    expected: f64,
    predicted: f64,
}

/// `point,split,serial,start,expected,predicted` for every given report.
pub fn write_predictions_csv<'a>(
    path: &Path,
    reports: impl IntoIterator<Item = (&'a SweepPoint, &'a EvalReport)>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (p, r) in reports {
        for pair in &r.predictions {
            w.serialize(PredictionRow {
                point: &p.label,
                split: &r.context.split,
                serial: &pair.serial,
                start: pair.start,
                expected: pair.expected,
                predicted: pair.predicted,
            })
            .map_err(csv_err(path))?;
        }
    }
    finish(w, path)
}
