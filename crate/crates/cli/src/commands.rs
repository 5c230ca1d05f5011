use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use diskrul::dataset::{make_windows, prepare_splits, read_windows, split_serials, write_windows, DatasetSplits, WindowedDataset};
use diskrul::eval::{
    config_sweep, evaluate, generalize, window_sweep, write_fig6_csv, write_predictions_csv, write_table4_csv,
    write_table5_csv, EvalContext, EvalReport, PointStatus, SweepAxis, SweepPoint, SweepReport, WindowSweepSpec,
};
use diskrul::featsel::{rank_features, select_features};
use diskrul::ingest::{extract_histories, failure_census, ingest_csv, write_atomic, Store};
use diskrul::preprocess::{prepare_histories, scale_history, DriveHistory, FeatureSet, ScalerParams};
use diskrul::seqnet::{train_checkpoint, AnyCheckpoint, EncoderDecoderConfig};
use diskrul::synth::{generate, SynthSpec};
use diskrul::Error;

use crate::config::{FeatureSource, RunConfig};
use crate::{CliError, Command, UsageError};

type Result<T> = std::result::Result<T, CliError>;

fn sha256_file(path: &Path) -> diskrul::Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> diskrul::Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::schema(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> diskrul::Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Seeds {
    top_level: u64,
    split: u64,
    train: u64,
    boosting: u64,
    folds: u64,
    synth: Option<u64>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    version: &'a str,
    /// Command line as invoked.
    argv: Vec<String>,
    config: &'a RunConfig,
    seeds: Seeds,
    /// sha256 of every input file read.
    inputs: BTreeMap<String, String>,
    /// sha256 of every artifact written, by file name.
    artifacts: BTreeMap<String, String>,
}

/// Output directory plus the inputs read and artifacts written so far.
struct Outputs {
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
    synth_seed: Option<u64>,
}

impl Outputs {
    fn create(dir: &Path) -> diskrul::Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            synth_seed: None,
        })
    }

    /// Path of a named artifact; the name is recorded for hashing.
    fn artifact(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn input(&mut self, path: &Path) -> diskrul::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn finish(self, command: &str, config: &RunConfig) -> diskrul::Result<()> {
        let mut artifacts = BTreeMap::new();
        for name in &self.artifacts {
            artifacts.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let record = RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            config,
            seeds: Seeds {
                top_level: config.seed,
                split: config.split.seed,
                train: config.train.seed,
                boosting: config.seed,
                folds: config.seed,
                synth: self.synth_seed,
            },
            inputs: self.inputs,
            artifacts,
        };
        write_json(&self.dir.join("run.json"), &record)
    }
}

pub fn run(command: &Command, config: RunConfig, seed_flag: Option<u64>) -> Result<()> {
    match command {
        Command::Ingest { files } => ingest(&config, files),
        Command::Stats { models } => stats(&config, models),
        Command::SelectFeatures { k } => select(&config, *k),
        Command::BuildDataset => build_dataset(&config),
        Command::Train { data } => train(&config, data),
        Command::Eval { data, checkpoint } => eval(&config, data, checkpoint),
        Command::SweepConfigs { data, configs } => sweep_configs(&config, data, configs),
        Command::SweepWindows { window_sizes } => sweep_windows(&config, window_sizes),
        Command::Generalize {
            data,
            checkpoint,
            targets,
        } => generalize_models(&config, data, checkpoint, targets),
        Command::Synth {
            spec,
            drives,
            mean_lifetime,
            missing_rate,
        } => synth(&config, spec.as_deref(), *drives, *mean_lifetime, *missing_rate, seed_flag),
    }
}

fn ingest(config: &RunConfig, files: &[PathBuf]) -> Result<()> {
    let root = config.require_root()?;
    let store = Store::open(root);
    let summary = ingest_csv(&store, files, config.model.as_deref())?;
    let mut out = Outputs::create(config.out.as_deref().unwrap_or(root))?;
    write_json(&out.artifact("ingest_summary.json"), &summary)?;
    println!(
        "read {} files ({} already ingested), kept {} of {} records, {} malformed rows, {} partitions written",
        summary.files_read,
        summary.files_skipped,
        summary.records_kept,
        summary.records_read,
        summary.malformed_rows,
        summary.partitions_written()
    );
    out.finish("ingest", config)?;
    Ok(())
}

fn stats(config: &RunConfig, models: &[String]) -> Result<()> {
    let store = Store::open(config.require_root()?);
    let census = failure_census(&store, (!models.is_empty()).then_some(models))?;
    let mut text = String::from("model,unique_failures\n");
    for e in &census.entries {
        text.push_str(&format!("{},{}\n", e.model, e.unique_failures));
    }
    print!("{text}");
    if let Some(dir) = &config.out {
        let mut out = Outputs::create(dir)?;
        write_atomic(&out.artifact("stats.csv"), text.as_bytes())?;
        out.finish("stats", config)?;
    }
    Ok(())
}

/// Labeled, unscaled histories of the configured model and the features used.
fn load_histories(config: &RunConfig, out: &mut Outputs) -> Result<(FeatureSet, Vec<DriveHistory>)> {
    let store = Store::open(config.require_root()?);
    let model = config.require_model()?;
    let extraction = extract_histories(&store, model, config.years())?;
    if extraction.drives.is_empty() {
        return Err(Error::domain(format!("no records for drive model {model} in the requested years")).into());
    }
    if let FeatureSource::File(p) = &config.features {
        out.input(p)?;
    }
    let features = match config.fixed_features()? {
        Some(f) => f,
        None => {
            let observed: BTreeSet<u16> = extraction
                .drives
                .iter()
                .flat_map(|d| d.records.iter().flat_map(|r| r.smart.keys().copied()))
                .collect();
            FeatureSet::new(observed.into_iter().collect())?
        }
    };
    let (histories, skipped) = prepare_histories(&extraction.drives, &features, config.labeling())?;
    log::info!("{} drives labeled, {} skipped", histories.len(), skipped.len());
    if histories.is_empty() {
        return Err(Error::domain(format!("drive model {model} has no labelable drives")).into());
    }
    Ok((features, histories))
}

fn select(config: &RunConfig, k: usize) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let (features, histories) = load_histories(config, &mut out)?;
    if k == 0 || k > features.len() {
        return Err(UsageError(format!("--k must lie in 1..={}", features.len())).into());
    }
    // Rank on the drives that will form the training split, so the held-out
    // drives never inform the feature choice.
    let window = config.window();
    let eligible = histories
        .iter()
        .filter(|h| window.starts(h.len()).next().is_some())
        .map(|h| h.serial.clone());
    let [train, _, _] = split_serials(eligible, &config.split)?;
    let train_h: Vec<DriveHistory> = histories.iter().filter(|h| train.contains(&h.serial)).cloned().collect();
    let (_, report) = rank_features(&train_h, &features, &config.gbt, config.seed)?;
    let chosen = select_features(&report, k)?;
    chosen.save(&out.artifact("features.json"))?;
    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| Error::io(out.dir.join("importance.csv"), e))?;
    write_atomic(&out.artifact("importance.csv"), &csv)?;
    println!("selected attributes: {:?}", chosen.as_slice());
    out.finish("select-features", config)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    train: BTreeSet<String>,
    val: BTreeSet<String>,
    test: BTreeSet<String>,
    /// Drives too short for one window.
    skipped: Vec<String>,
}

fn build_dataset(config: &RunConfig) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let (features, histories) = load_histories(config, &mut out)?;
    let prepared = prepare_splits(&histories, &features, config.window(), &config.split)?;
    // Scaling is per value, so windowing the scaled histories gives the same
    // samples as scaling each split's windows.
    let scaled: Vec<DriveHistory> = histories
        .iter()
        .map(|h| {
            let mut h = h.clone();
            scale_history(&mut h, &prepared.scaler).map(|_| h)
        })
        .collect::<diskrul::Result<_>>()?;
    let mut all = make_windows(&scaled, config.window())?.dataset;
    all.features = features.to_vec();
    write_windows(&out.artifact("windows.bin"), &all)?;
    let [train, val, test] = prepared.serials.clone();
    write_json(
        &out.artifact("split.json"),
        &SplitFile {
            train,
            val,
            test,
            skipped: prepared.skipped.clone(),
        },
    )?;
    prepared.scaler.save(&out.artifact("scaler.json"))?;
    features.save(&out.artifact("features.json"))?;
    let s = &prepared.splits;
    println!(
        "{} windows (T={}, stride {}): train {}, val {}, test {}; {} drives too short",
        all.len(),
        config.timesteps,
        config.stride,
        s.train.len(),
        s.val.len(),
        s.test.len(),
        prepared.skipped.len()
    );
    out.finish("build-dataset", config)?;
    Ok(())
}

/// `--data` may name the dataset directory or its `windows.bin`.
fn data_dir(data: &Path) -> PathBuf {
    if data.is_file() {
        data.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    } else {
        data.to_path_buf()
    }
}

fn load_splits(data: &Path, out: &mut Outputs) -> Result<DatasetSplits> {
    let dir = data_dir(data);
    let windows = dir.join("windows.bin");
    let split = dir.join("split.json");
    out.input(&windows)?;
    out.input(&split)?;
    let all: WindowedDataset = read_windows(&windows)?;
    let serials: SplitFile = read_json(&split)?;
    Ok(DatasetSplits {
        train: all.subset(&serials.train),
        val: all.subset(&serials.val),
        test: all.subset(&serials.test),
    })
}

/// The window size is fixed by the dataset, not the flags.
fn with_data_window(config: &RunConfig, splits: &DatasetSplits) -> RunConfig {
    RunConfig {
        timesteps: splits.train.timesteps,
        horizon: splits.train.horizon,
        ..config.clone()
    }
}

fn drive_model(config: &RunConfig) -> String {
    config.model.clone().unwrap_or_default()
}

fn train(config: &RunConfig, data: &Path) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let splits = load_splits(data, &mut out)?;
    let config = &with_data_window(config, &splits);
    let ds = &splits.train;
    let model_cfg = config.network.model_config(ds.n_features, ds.timesteps);
    let (checkpoint, report) = train_checkpoint(model_cfg, &splits.train, &splits.val, &config.train)?;
    checkpoint.save(&out.artifact("model.ckpt"))?;
    write_json(&out.artifact("train_report.json"), &report)?;
    println!(
        "best epoch {} of {} (validation RMSE {:.4}){}",
        report.best_epoch,
        report.stopped_epoch,
        report.best_val_rmse,
        if report.early_stopped { ", stopped early" } else { "" }
    );
    out.finish("train", config)?;
    Ok(())
}

fn single_point(label: &str, config: Option<EncoderDecoderConfig>, reports: Vec<EvalReport>) -> SweepReport {
    SweepReport {
        axis: SweepAxis::Config,
        drive_model: String::new(),
        points: vec![SweepPoint {
            label: label.to_string(),
            config_id: None,
            timesteps: config.as_ref().map_or(0, |c| c.timesteps),
            config,
            status: PointStatus::Ok,
            reports,
            folds: Vec::new(),
            training: None,
            n_drives: 0,
        }],
    }
}

fn eval(config: &RunConfig, data: &Path, checkpoint: &Path) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let splits = load_splits(data, &mut out)?;
    let config = &with_data_window(config, &splits);
    out.input(checkpoint)?;
    let model = AnyCheckpoint::load(checkpoint)?;
    let t = splits.train.timesteps;
    let mut reports = Vec::new();
    println!("split,n,rmse,r2");
    for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let ctx = EvalContext {
            drive_model: drive_model(config),
            config_id: None,
            timesteps: t,
            split: name.to_string(),
        };
        let report = evaluate(&model, ds, ctx)?;
        println!(
            "{name},{},{},{}",
            report.n,
            report.rmse,
            report.r2.map_or_else(|| "undefined".to_string(), |v| v.to_string())
        );
        reports.push(report);
    }
    let sweep = single_point("eval", Some(model.config().clone()), reports);
    let point = &sweep.points[0];
    for r in &point.reports {
        let name = format!("predictions_{}.csv", r.context.split);
        write_predictions_csv(&out.artifact(&name), [(point, r)])?;
    }
    write_json(&out.artifact("eval.json"), &point.reports)?;
    out.finish("eval", config)?;
    Ok(())
}

fn report_status(report: &SweepReport) -> Result<()> {
    for p in &report.points {
        if let PointStatus::Failed(msg) = &p.status {
            eprintln!("warning: {} failed: {msg}", p.label);
        }
    }
    if report.points.iter().all(|p| matches!(p.status, PointStatus::Failed(_))) {
        return Err(Error::numeric("every sweep point failed").into());
    }
    Ok(())
}

fn sweep_configs(config: &RunConfig, data: &Path, ids: &[usize]) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let ids = if ids.is_empty() { &config.sweep.configs[..] } else { ids };
    let splits = load_splits(data, &mut out)?;
    let config = &with_data_window(config, &splits);
    let (f, t) = (splits.train.n_features, splits.train.timesteps);
    let configs: Vec<(usize, EncoderDecoderConfig)> = ids
        .iter()
        .map(|&id| EncoderDecoderConfig::sweep_row(id, f, t).map(|c| (id, c)))
        .collect::<diskrul::Result<_>>()
        .map_err(|e| UsageError(e.to_string()))?;
    let report = config_sweep(&splits, &drive_model(config), &configs, &config.train);
    write_table4_csv(&out.artifact("table4.csv"), &report)?;
    write_predictions_csv(&out.artifact("predictions_configs.csv"), report.all_reports())?;
    report.save_json(&out.artifact("sweep_configs.json"))?;
    println!("config,train_rmse,val_rmse,test_rmse,status");
    for p in &report.points {
        let rmse = |s: &str| p.report(s).map_or_else(String::new, |r| r.rmse.to_string());
        println!(
            "{},{},{},{},{}",
            p.config_id.unwrap_or(0),
            rmse("train"),
            rmse("val"),
            rmse("test"),
            p.status.label()
        );
    }
    out.finish("sweep-configs", config)?;
    report_status(&report)
}

fn sweep_windows(config: &RunConfig, sizes: &[usize]) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let (features, histories) = load_histories(config, &mut out)?;
    let spec = WindowSweepSpec {
        timesteps: if sizes.is_empty() { config.sweep.window_sizes.clone() } else { sizes.to_vec() },
        folds: config.folds(),
        stride: config.stride,
        config_id: config.sweep.configs[0],
        seed: config.seed,
    };
    let report = window_sweep(&histories, &features, &drive_model(config), &spec, &config.train)?;
    let fig6 = out.artifact("fig6.csv");
    let summary = out.artifact("fig6_summary.csv");
    write_fig6_csv(&fig6, &summary, &report)?;
    write_predictions_csv(&out.artifact("predictions_windows.csv"), report.all_reports())?;
    report.save_json(&out.artifact("sweep_windows.json"))?;
    println!("timesteps,status,cv_rmse");
    for p in &report.points {
        let cv = p.report("cv").map_or_else(String::new, |r| r.rmse.to_string());
        println!("{},{},{cv}", p.timesteps, p.status.label());
    }
    out.finish("sweep-windows", config)?;
    report_status(&report)
}

fn generalize_models(config: &RunConfig, data: &Path, checkpoint: &Path, targets: &[String]) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let source = config.require_model()?;
    let store = Store::open(config.require_root()?);
    let dir = data_dir(data);
    let (scaler_path, features_path) = (dir.join("scaler.json"), dir.join("features.json"));
    out.input(&scaler_path)?;
    out.input(&features_path)?;
    out.input(checkpoint)?;
    let scaler = ScalerParams::load(&scaler_path)?;
    let features = FeatureSet::load(&features_path)?;
    let model = AnyCheckpoint::load(checkpoint)?;
    let report = generalize(&model, &scaler, &features, source, targets, &store, config.years(), config.stride)?;
    write_table5_csv(&out.artifact("table5.csv"), &report)?;
    write_predictions_csv(&out.artifact("predictions_generalize.csv"), report.all_reports())?;
    report.save_json(&out.artifact("generalize.json"))?;
    println!("model,status,r2,rmse");
    for p in &report.points {
        let r = p.report("all");
        println!(
            "{},{},{},{}",
            p.label,
            p.status.label(),
            r.and_then(|r| r.r2).map_or_else(String::new, |v| v.to_string()),
            r.map_or_else(String::new, |r| r.rmse.to_string())
        );
    }
    out.finish("generalize", config)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthTruth<'a> {
    model: &'a str,
    informative: &'a [u16],
    lifetimes: BTreeMap<&'a str, u32>,
}

fn synth(
    config: &RunConfig,
    spec_path: Option<&Path>,
    drives: Option<usize>,
    mean_lifetime: Option<f64>,
    missing_rate: Option<f64>,
    seed_flag: Option<u64>,
) -> Result<()> {
    let mut out = Outputs::create(config.require_out()?)?;
    let mut spec = match spec_path {
        Some(p) => {
            out.input(p)?;
            SynthSpec::load(p)?
        }
        None => SynthSpec {
            seed: config.seed,
            ..SynthSpec::default()
        },
    };
    if let Some(s) = seed_flag {
        spec.seed = s;
    }
    if let Some(m) = &config.model {
        spec.model = m.clone();
    }
    if let Some(n) = drives {
        spec.n_drives = n;
    }
    if let Some(m) = mean_lifetime {
        spec.mean_lifetime_days = m;
    }
    if let Some(r) = missing_rate {
        spec.missing_rate = r;
    }
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    out.synth_seed = Some(spec.seed);
    let fleet = generate(&spec)?;
    fleet.write_csv(&out.artifact("fleet.csv"))?;
    write_json(&out.artifact("synth_spec.json"), &spec)?;
    let truth = SynthTruth {
        model: &spec.model,
        informative: &fleet.informative,
        lifetimes: fleet
            .drives
            .iter()
            .zip(&fleet.lifetimes)
            .map(|(d, &l)| (d.serial.as_str(), l))
            .collect(),
    };
    write_json(&out.artifact("synth_truth.json"), &truth)?;
    println!(
        "{} drives of {} written to {}",
        spec.n_drives,
        spec.model,
        out.dir.join("fleet.csv").display()
    );
    out.finish("synth", config)?;
    Ok(())
}
