//! Acceptance checks. Runs as a plain binary and prints one line per criterion.
//!
//! The optional full-corpus check runs when `DISKRUL_CORPUS_STORE` names a
//! store with the 2013–2022 logs already ingested; otherwise it is skipped.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use diskrul::dataset::{kfold_serials, make_windows, prepare_splits, split_serials, SplitSpec, WindowSpec};
use diskrul::eval::{
    config_sweep, window_sweep, write_fig6_csv, write_predictions_csv, write_table4_csv, SweepReport,
    WindowSweepSpec,
};
use diskrul::featsel::{rank_features, select_features, GbtConfig};
use diskrul::ingest::{extract_histories, failure_census, DriveDayRecord, RawDriveSeries, Store};
use diskrul::preprocess::{
    apply_scaler, build_history, invert_scaler, label_rul, prepare_histories, DriveHistory, FeatureSet,
    Labeling, ScalerParams,
};
use diskrul::seqnet::{
    layer_forward, lstm_cell_step, train_checkpoint, EncoderDecoderConfig, EncoderDecoderModel, LstmParams,
    TrainConfig, SWEEP_CONFIGS,
};
use diskrul::synth::SynthSpec;
use diskrul::tensor::Matrix;

use common::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

/// Smallest denominator in the relative error. At eps = 1e-5 the difference
/// quotient carries ~1e-11 of rounding, so gradients below this scale are
/// held to an absolute 1e-10 instead.
const GRAD_FLOOR: f64 = 1e-6;

/// Worst `(floored, strict)` relative error over every parameter of one model.
fn gradient_errors(seed: u64) -> Result<(f64, f64, usize), String> {
    let cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    let (batch, t, f) = (2, 3, 2);
    let mut model = EncoderDecoderModel::<f64>::init(cfg, seed).map_err(|e| e.to_string())?;
    // Zero biases put ReLU pre-activations exactly on the kink.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for tensor in model.params_mut().tensors_mut() {
        for v in tensor.iter_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    // Inputs in the scaled range the network sees in practice.
    let x: Vec<f64> = (0..batch * t * f).map(|_| rng.random_range(0.0..255.0)).collect();
    let y: Vec<f64> = (0..batch * t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |m: &EncoderDecoderModel<f64>| {
        let out = m.predict(&x, batch).unwrap();
        out.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / out.len() as f64
    };
    let (_, cache) = model.forward(&x, batch).map_err(|e| e.to_string())?;
    let grad = model.backward(&cache, &y).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();

    let eps = 1e-5;
    let mut k = 0;
    let (mut floored, mut strict) = (0.0f64, 0.0f64);
    for ti in 0..model.params().tensors().len() {
        for j in 0..model.params().tensors()[ti].len() {
            let orig = model.params().tensors()[ti][j];
            model.params_mut().tensors_mut()[ti][j] = orig + eps;
            let up = loss(&model);
            model.params_mut().tensors_mut()[ti][j] = orig - eps;
            let down = loss(&model);
            model.params_mut().tensors_mut()[ti][j] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = analytic[k];
            let scale = a.abs().max(fd.abs());
            floored = floored.max((a - fd).abs() / scale.max(GRAD_FLOOR));
            strict = strict.max((a - fd).abs() / scale.max(1e-8));
            k += 1;
        }
    }
    ensure(k == analytic.len(), || "gradient and parameter counts differ".into())?;
    Ok((floored, strict, k))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut n = 0;
    for seed in [17, 29, 31, 47, 53] {
        let (floored, strict, k) = gradient_errors(seed)?;
        ensure(floored < 1e-4, || format!("seed {seed}: relative error {floored:.3e}"))?;
        worst = (worst.0.max(floored), worst.1.max(strict));
        n = k;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{n} parameters x 5 models, max relative error {:.2e} (denominator floor 1e-8: {:.2e})",
        worst.0, worst.1
    ))
}

fn lstm_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let zero = LstmParams::<f64>::zeros(3, 4);
    let steps = 6;
    let inputs: Vec<f64> = (0..steps * 3).map(|_| rng.random_range(-10.0..10.0)).collect();
    let cache = layer_forward(&zero, &inputs, steps);
    ensure(cache.outputs(4).iter().all(|&h| h == 0.0), || "zero layer produced non-zero h".into())?;
    let zero_model = EncoderDecoderModel::<f64>::zeros(EncoderDecoderConfig::new(4, 2, 2, 3, steps))
        .map_err(|e| e.to_string())?;
    let out = zero_model.predict(&inputs, 1).map_err(|e| e.to_string())?;
    ensure(out.iter().all(|&v| v == 0.0), || "zero model produced non-zero output".into())?;

    let params = LstmParams::<f64>::init(5, 6, &mut rng);
    for n in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-5.0..5.0)).collect();
        let h: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = lstm_cell_step(&params, &x, &h, &c).map_err(|e| e.to_string())?;
        let unit = |v: &[f64]| v.iter().all(|&g| g > 0.0 && g < 1.0);
        ensure(unit(&s.f) && unit(&s.i) && unit(&s.o), || format!("sigmoid gate out of (0,1) at input {n}"))?;
        ensure(s.candidate.iter().all(|&g| g > -1.0 && g < 1.0), || format!("candidate out of (-1,1) at input {n}"))?;
        ensure(s.h.iter().all(|&g| g > -1.0 && g < 1.0), || format!("h out of (-1,1) at input {n}"))?;
    }

    // All-zero weights: every sigmoid gate is 1/2 and the candidate is 0.
    let scalar = LstmParams::<f64>::zeros(1, 1);
    let s = lstm_cell_step(&scalar, &[0.7], &[0.0], &[2.0]).map_err(|e| e.to_string())?;
    let h_hand = 0.5 * 1.0f64.tanh();
    ensure((s.c[0] - 1.0).abs() < 1e-6, || format!("C = {}", s.c[0]))?;
    ensure((s.h[0] - h_hand).abs() < 1e-6 && (s.h[0] - 0.3808).abs() < 1e-4, || format!("h = {}", s.h[0]))?;
    Ok(format!("1000 random steps in range, scalar case h = {:.6}", s.h[0]))
}

fn record(serial: &str, date: NaiveDate, smart: BTreeMap<u16, f64>, failure: bool) -> DriveDayRecord {
    DriveDayRecord {
        date,
        serial: serial.into(),
        model: "M".into(),
        capacity_bytes: None,
        failure,
        smart,
        smart_normalized: BTreeMap::new(),
    }
}

fn preprocessing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Scaler round trip on columns spanning up to [0, 1e14].
    let mut worst_scaler = 0.0f64;
    for _ in 0..50 {
        let (rows, cols) = (40, 6);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(0.0..1.0) * 10f64.powf(rng.random_range(0.0..14.0)))
            .collect();
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let cols_of = |k: usize| x.column(k).collect::<Vec<f64>>();
        let params = ScalerParams {
            features: (1..=cols as u16).collect(),
            min: (0..cols).map(|k| cols_of(k).into_iter().fold(f64::INFINITY, f64::min)).collect(),
            max: (0..cols).map(|k| cols_of(k).into_iter().fold(f64::NEG_INFINITY, f64::max)).collect(),
        };
        let back = invert_scaler(&apply_scaler(&x, &params).unwrap(), &params).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                let span = params.max[c] - params.min[c];
                let err = (back.get(r, c) - x.get(r, c)).abs() / span;
                worst_scaler = worst_scaler.max(err);
            }
        }
    }
    ensure(worst_scaler < 1e-9, || format!("scaler round trip error {worst_scaler:e}"))?;

    // Linear series with interior days and single readings deleted.
    let d0 = NaiveDate::from_ymd_opt(2020, 5, 1).unwrap();
    let features = FeatureSet::new(vec![5, 9, 194]).unwrap();
    let line = |k: usize, day: usize| [3.0, -0.25, 1e9][k] * day as f64 + [10.0, 400.0, 7.0][k];
    let mut worst_interp = 0.0f64;
    for trial in 0..20 {
        let len = 60;
        let mut records = Vec::new();
        for day in 0..len {
            let interior = day > 0 && day + 1 < len;
            if interior && rng.random_bool(0.2) {
                continue;
            }
            let mut smart = BTreeMap::new();
            for (k, &a) in features.iter().enumerate() {
                if !(interior && rng.random_bool(0.2)) {
                    smart.insert(a, line(k, day));
                }
            }
            let date = d0 + chrono::Days::new(day as u64);
            records.push(record(&format!("S{trial}"), date, smart, day + 1 == len));
        }
        let series = RawDriveSeries {
            serial: format!("S{trial}"),
            model: "M".into(),
            records,
        };
        let (h, _) = build_history(&series, &features).map_err(|e| e.to_string())?;
        ensure(h.len() == len, || format!("history has {} days, expected {len}", h.len()))?;
        for day in 0..len {
            for k in 0..features.len() {
                let want = line(k, day);
                let err = (h.x.get(day, k) - want).abs() / want.abs().max(1.0);
                worst_interp = worst_interp.max(err);
            }
        }
        let h = label_rul(h).map_err(|e| e.to_string())?;
        ensure(*h.rul.last().unwrap() == 0.0, || "RUL does not end at 0".into())?;
        ensure(h.rul.windows(2).all(|w| w[0] - w[1] == 1.0), || "RUL does not fall by 1 per day".into())?;
    }
    ensure(worst_interp < 1e-9, || format!("interpolation error {worst_interp:e}"))?;
    Ok(format!("scaler {worst_scaler:.1e}, interpolation {worst_interp:.1e}"))
}

fn window_fixture() -> Vec<DriveHistory> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d0 = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    (0..20)
        .map(|i| {
            let len = rng.random_range(3..70);
            let f = 3;
            let data = (0..len * f).map(|_| rng.random_range(0.0..255.0)).collect();
            DriveHistory {
                serial: format!("W{i:02}"),
                model: "M".into(),
                dates: d0.iter_days().take(len).collect(),
                x: Matrix::from_vec(len, f, data).unwrap(),
                rul: (0..len).rev().map(|r| r as f64).collect(),
                failed: true,
            }
        })
        .collect()
}

type WindowKey = (String, usize, Vec<u64>, Vec<u64>);

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn windowing() -> Outcome {
    let fixture = window_fixture();
    let mut counts = Vec::new();
    for t in [5, 25, 30] {
        let got = make_windows(&fixture, WindowSpec::new(t, 1)).map_err(|e| e.to_string())?.dataset;
        let mut produced: Vec<WindowKey> = (0..got.len())
            .map(|s| (got.groups[s].clone(), got.starts[s], bits(got.sample_x(s)), bits(got.sample_y(s))))
            .collect();
        let mut brute: Vec<WindowKey> = Vec::new();
        for h in &fixture {
            let f = h.x.cols();
            let mut s = 0;
            while s + t <= h.len() {
                let x = &h.x.as_slice()[s * f..(s + t) * f];
                brute.push((h.serial.clone(), s, bits(x), bits(&h.rul[s..s + t])));
                s += 1;
            }
        }
        produced.sort();
        brute.sort();
        ensure(produced == brute, || format!("T={t}: {} windows vs {} by enumeration", produced.len(), brute.len()))?;
        counts.push(format!("T{t}:{}", brute.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100u64 {
        let n = rng.random_range(5..80);
        let serials: BTreeSet<String> = (0..n).map(|i| format!("D{i:03}")).collect();
        let spec = SplitSpec {
            seed,
            ..SplitSpec::default()
        };
        let parts = split_serials(serials.iter().cloned(), &spec).map_err(|e| e.to_string())?;
        check_partition(&serials, &parts).map_err(|e| format!("split seed {seed}: {e}"))?;
        let k = rng.random_range(2..=5);
        let folds = kfold_serials(serials.iter().cloned(), k, seed).map_err(|e| e.to_string())?;
        ensure(folds.len() == k, || format!("seed {seed}: {} folds, expected {k}", folds.len()))?;
        check_partition(&serials, &folds).map_err(|e| format!("fold seed {seed}: {e}"))?;
    }
    Ok(format!("{} windows match; 100 seeds partition cleanly", counts.join(" ")))
}

fn check_partition(all: &BTreeSet<String>, parts: &[BTreeSet<String>]) -> Result<(), String> {
    for (i, a) in parts.iter().enumerate() {
        for b in &parts[i + 1..] {
            ensure(a.is_disjoint(b), || "overlapping parts".into())?;
        }
    }
    let union: BTreeSet<String> = parts.iter().flatten().cloned().collect();
    ensure(&union == all, || "parts do not cover every serial".into())
}

fn feature_selection() -> Outcome {
    let start = Instant::now();
    let mut ranks = Vec::new();
    for seed in [1, 2, 3] {
        let spec = SynthSpec {
            n_drives: 100,
            n_features: 15,
            n_informative: 3,
            noise_sigma: 0.1,
            seed,
            ..SynthSpec::default()
        };
        let fleet = generate_fleet(&spec);
        let (features, h) = histories(&fleet);
        let (ensemble, report) = rank_features(&h, &features, &GbtConfig::default(), seed).map_err(|e| e.to_string())?;
        for a in &fleet.informative {
            let rank = report.rank_of(*a).unwrap();
            ensure(rank < 5, || format!("seed {seed}: informative attribute {a} ranked {}", rank + 1))?;
            ranks.push(rank + 1);
        }
        let mse = &ensemble.train_mse;
        ensure(mse.windows(2).all(|w| w[1] <= w[0]), || format!("seed {seed}: training error increased"))?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("informative ranks {ranks:?} in {:.1?}", start.elapsed()))
}

struct EndToEnd {
    splits: diskrul::dataset::PreparedSplits,
    features: FeatureSet,
}

/// Synthetic fleet through CSV, the store, extraction, labeling, feature
/// selection on training drives, and scaling.
fn end_to_end_data(dir: &Path) -> Result<EndToEnd, String> {
    let fleet = generate_fleet(&fleet_spec(200, 120.0, 0));
    let store = ingest_fleet(dir, &[&fleet]);
    let all = FeatureSet::new(fleet.attributes()).map_err(|e| e.to_string())?;
    let extracted = extract_histories(&store, "SYNTH-0001", 2013..=2099).map_err(|e| e.to_string())?;
    let (h, _) = prepare_histories(&extracted.drives, &all, Labeling::FailedOnly).map_err(|e| e.to_string())?;
    let window = WindowSpec::new(25, 5);
    let split = SplitSpec::default();
    let first = prepare_splits(&h, &all, window, &split).map_err(|e| e.to_string())?;
    let train_h: Vec<DriveHistory> = h.iter().filter(|d| first.serials[0].contains(&d.serial)).cloned().collect();
    let (_, report) = rank_features(&train_h, &all, &GbtConfig::default(), 0).map_err(|e| e.to_string())?;
    let features = select_features(&report, 8).map_err(|e| e.to_string())?;
    let (h, _) = prepare_histories(&extracted.drives, &features, Labeling::FailedOnly).map_err(|e| e.to_string())?;
    let splits = prepare_splits(&h, &features, window, &split).map_err(|e| e.to_string())?;
    ensure(splits.serials == first.serials, || "split changed after feature selection".into())?;
    Ok(EndToEnd { splits, features })
}

fn end_to_end(data: &EndToEnd, setup: Duration) -> Outcome {
    let start = Instant::now();
    let s = &data.splits.splits;
    let tcfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let cfg = EncoderDecoderConfig::new(50, 1, 1, data.features.len(), 25);
    let (model, report) = train_checkpoint(cfg, &s.train, &s.val, &tcfg).map_err(|e| e.to_string())?;
    let pred = model.predict_dataset(&s.test).map_err(|e| e.to_string())?.last;
    let truth = s.test.final_targets();
    let train_truth = s.train.final_targets();
    let mean = train_truth.iter().sum::<f64>() / train_truth.len() as f64;
    let rmse = |p: &dyn Fn(usize) -> f64| {
        (truth.iter().enumerate().map(|(i, y)| (p(i) - y).powi(2)).sum::<f64>() / truth.len() as f64).sqrt()
    };
    let model_rmse = rmse(&|i| pred[i]);
    let baseline = rmse(&|_| mean);
    let ratio = model_rmse / baseline;
    let elapsed = setup + start.elapsed();
    ensure(ratio <= 0.5, || format!("RMSE {model_rmse:.2} vs baseline {baseline:.2} (ratio {ratio:.3})"))?;
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "test RMSE {model_rmse:.2} days vs mean baseline {baseline:.2} (ratio {ratio:.3}), best epoch {}, {:.0?}",
        report.best_epoch, elapsed
    ))
}

fn determinism(data: &EndToEnd) -> Outcome {
    let s = &data.splits.splits;
    let tcfg = TrainConfig {
        max_epochs: 3,
        seed: 7,
        ..TrainConfig::default()
    };
    let cfg = EncoderDecoderConfig::new(50, 1, 1, data.features.len(), 25);
    let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let (ckpt, report) = train_checkpoint(cfg.clone(), &s.train, &s.val, &tcfg).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        ckpt.to_writer(&mut bytes).map_err(|e| e.to_string())?;
        let report = serde_json::to_vec(&report).unwrap();
        Ok((Sha256::digest(&report).to_vec(), Sha256::digest(&bytes).to_vec()))
    };
    let a = run()?;
    let b = run()?;
    ensure(a.0 == b.0, || "training reports differ".into())?;
    ensure(a.1 == b.1, || "checkpoint hashes differ".into())?;
    Ok(format!("checkpoint sha256 {}", hex_prefix(&a.1)))
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Recomputes every (point, split) RMSE from the emitted prediction CSV.
fn recompute_from_csv(path: &Path, report: &SweepReport) -> Result<usize, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let e: f64 = row[4].parse().map_err(|_| "bad expected value".to_string())?;
        let p: f64 = row[5].parse().map_err(|_| "bad predicted value".to_string())?;
        let entry = sums.entry((row[0].to_string(), row[1].to_string())).or_default();
        entry.0 += (p - e) * (p - e);
        entry.1 += 1;
    }
    let mut checked = 0;
    for (point, r) in report.all_reports() {
        let key = (point.label.clone(), r.context.split.clone());
        let (sse, n) = sums.get(&key).ok_or_else(|| format!("no pairs for {key:?}"))?;
        ensure(*n == r.n, || format!("{key:?}: {n} pairs, report says {}", r.n))?;
        let rmse = (sse / *n as f64).sqrt();
        ensure((rmse - r.rmse).abs() <= 1e-12, || format!("{key:?}: recomputed {rmse} vs {}", r.rmse))?;
        checked += 1;
    }
    ensure(checked == sums.len(), || "prediction file has rows no report claims".into())?;
    Ok(checked)
}

fn sweep_shape(dir: &Path) -> Outcome {
    let tcfg = TrainConfig {
        max_epochs: 1,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let fleet = generate_fleet(&fleet_spec(12, 40.0, 21));
    let (features, h) = histories(&fleet);
    let prepared = prepare_splits(&h, &features, WindowSpec::new(5, 5), &SplitSpec::default()).map_err(|e| e.to_string())?;
    let configs: Vec<(usize, EncoderDecoderConfig)> = (1..=SWEEP_CONFIGS.len())
        .map(|id| (id, EncoderDecoderConfig::sweep_row(id, features.len(), 5).unwrap()))
        .collect();
    let report = config_sweep(&prepared.splits, "SYNTH-0001", &configs, &tcfg);
    let table = dir.join("table4.csv");
    write_table4_csv(&table, &report).map_err(|e| e.to_string())?;
    let mut rdr = csv::Reader::from_path(&table).map_err(|e| e.to_string())?;
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(rows.len() == 6, || format!("{} configuration rows", rows.len()))?;
    for (row, &(u, e, d)) in rows.iter().zip(&SWEEP_CONFIGS) {
        let shape = (row[1].parse::<usize>().unwrap(), row[2].parse::<usize>().unwrap(), row[3].parse::<usize>().unwrap());
        ensure(shape == (u, e, d), || format!("row {} has shape {shape:?}", &row[0]))?;
        ensure(&row[12] == "ok", || format!("row {} status {}", &row[0], &row[12]))?;
    }
    for (row, p) in rows.iter().zip(&report.points) {
        let test: f64 = row[7].parse().map_err(|_| "bad test_rmse".to_string())?;
        ensure(test == p.report("test").unwrap().rmse, || "table value differs from report".into())?;
    }
    let preds = dir.join("predictions_configs.csv");
    write_predictions_csv(&preds, report.all_reports()).map_err(|e| e.to_string())?;
    let config_checked = recompute_from_csv(&preds, &report)?;

    let fleet = generate_fleet(&fleet_spec(10, 60.0, 22));
    let (features, h) = histories(&fleet);
    let spec = WindowSweepSpec {
        folds: 2,
        stride: 6,
        seed: 1,
        ..WindowSweepSpec::default()
    };
    let report = window_sweep(&h, &features, "SYNTH-0001", &spec, &tcfg).map_err(|e| e.to_string())?;
    let ts: Vec<usize> = report.points.iter().map(|p| p.timesteps).collect();
    ensure(ts == vec![5, 10, 15, 20, 25, 30], || format!("window sizes {ts:?}"))?;
    for p in &report.points {
        ensure(p.folds.len() == 2 && p.report("cv").is_some(), || format!("T={} lacks fold reports", p.timesteps))?;
    }
    write_fig6_csv(&dir.join("fig6.csv"), &dir.join("fig6_summary.csv"), &report).map_err(|e| e.to_string())?;
    let summary = std::fs::read_to_string(dir.join("fig6_summary.csv")).map_err(|e| e.to_string())?;
    ensure(summary.lines().count() == 7, || "window summary does not have six rows".into())?;
    let preds = dir.join("predictions_windows.csv");
    write_predictions_csv(&preds, report.all_reports()).map_err(|e| e.to_string())?;
    let window_checked = recompute_from_csv(&preds, &report)?;
    Ok(format!("6 config rows, 6 window sizes x 2 folds; {} reports recomputed", config_checked + window_checked))
}

const FAILURE_COUNTS: [(&str, u64); 8] = [
    ("ST4000DM000", 4934),
    ("ST12000NM0007", 2010),
    ("ST3000DM001", 1708),
    ("ST8000NM0055", 1101),
    ("ST8000DM002", 731),
    ("ST12000NM0008", 679),
    ("ST31500541AS", 397),
    ("ST31500341AS", 216),
];

fn full_corpus(root: &Path) -> Outcome {
    let store = Store::open(root);
    let census = failure_census(&store, None).map_err(|e| e.to_string())?;
    for (model, want) in FAILURE_COUNTS {
        let got = census.count(model);
        ensure(got == Some(want), || format!("{model}: {got:?} failures, expected {want}"))?;
    }
    let features = FeatureSet::default();
    let extracted = extract_histories(&store, "ST4000DM000", 2013..=2022).map_err(|e| e.to_string())?;
    let (h, _) = prepare_histories(&extracted.drives, &features, Labeling::FailedOnly).map_err(|e| e.to_string())?;
    let stride = std::env::var("DISKRUL_CORPUS_STRIDE").ok().and_then(|s| s.parse().ok()).unwrap_or(5);
    let prepared = prepare_splits(&h, &features, WindowSpec::new(25, stride), &SplitSpec::default())
        .map_err(|e| e.to_string())?;
    let configs: Vec<(usize, EncoderDecoderConfig)> = (1..=6)
        .map(|id| (id, EncoderDecoderConfig::sweep_row(id, features.len(), 25).unwrap()))
        .collect();
    let report = config_sweep(&prepared.splits, "ST4000DM000", &configs, &TrainConfig::default());
    let test: Vec<f64> = report
        .points
        .iter()
        .map(|p| p.report("test").map_or(f64::INFINITY, |r| r.rmse))
        .collect();
    let rmse = |s: &str| report.points[0].report(s).map_or(f64::NAN, |r| r.rmse);
    let line = format!(
        "config 1 train/val/test RMSE {:.2}/{:.2}/{:.2} (reference values 0.83/0.75/0.86)",
        rmse("train"),
        rmse("val"),
        rmse("test")
    );
    let best = test.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(test[0] == best, || format!("{line}; config 1 is not the lowest test RMSE: {test:?}"))?;
    Ok(line)
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut print = |n: usize, outcome: Outcome| match outcome {
        Ok(detail) => println!("criterion {n}: PASS  {detail}"),
        Err(detail) => {
            failed += 1;
            println!("criterion {n}: FAIL  {detail}");
        }
    };
    print(1, gradient_check());
    print(2, lstm_algebra());
    print(3, preprocessing());
    print(4, windowing());
    print(5, feature_selection());
    let setup = Instant::now();
    match end_to_end_data(dir.path()) {
        Ok(data) => {
            let setup = setup.elapsed();
            print(6, end_to_end(&data, setup));
            print(7, determinism(&data));
        }
        Err(e) => {
            print(6, Err(e.clone()));
            print(7, Err(e));
        }
    }
    print(8, sweep_shape(dir.path()));
    match std::env::var_os("DISKRUL_CORPUS_STORE") {
        Some(root) => print(9, full_corpus(Path::new(&root))),
        None => println!("criterion 9: SKIP  set DISKRUL_CORPUS_STORE to an ingested 2013-2022 store to run"),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
