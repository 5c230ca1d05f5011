use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::WindowedDataset;

fn loss(model: &EncoderDecoderModel<f64>, x: &[f64], y: &[f64], batch: usize) -> f64 {
    let out = model.predict(x, batch).unwrap();
    out.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / out.len() as f64
}

fn random_batch(batch: usize, t: usize, f: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..batch * t * f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..batch * t).map(|_| rng.random_range(-1.0..1.0)).collect();
    (x, y)
}

fn check_gradients(mut cfg: EncoderDecoderConfig, batch: usize, seed: u64) {
    // Unit gain keeps input-weight gradients well above the rounding floor.
    cfg.input_gain = 1.0;
    let (t, f) = (cfg.timesteps, cfg.input_features);
    let mut model = EncoderDecoderModel::<f64>::init(cfg, seed).unwrap();
    // Non-zero biases so every bias path is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for tensor in model.params_mut().tensors_mut() {
        for v in tensor.iter_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    let (x, y) = random_batch(batch, t, f, seed + 2);
    let (_, cache) = model.forward(&x, batch).unwrap();
    let analytic = model.backward(&cache, &y).unwrap();

    let eps = 1e-5;
    let mut worst = (0.0f64, 0.0f64);
    let flat: Vec<f64> = analytic.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut k = 0;
    let n_tensors = model.params().tensors().len();
    for ti in 0..n_tensors {
        let len = model.params().tensors()[ti].len();
        for j in 0..len {
            let orig = model.params().tensors()[ti][j];
            model.params_mut().tensors_mut()[ti][j] = orig + eps;
            let up = loss(&model, &x, &y, batch);
            model.params_mut().tensors_mut()[ti][j] = orig - eps;
            let down = loss(&model, &x, &y, batch);
            model.params_mut().tensors_mut()[ti][j] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = flat[k];
            // Below 1e-6 the difference quotient's rounding (~1e-11) dominates,
            // so small gradients are held to an absolute 1e-10.
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, a);
            }
            k += 1;
        }
    }
    assert_eq!(k, flat.len());
    assert!(worst.0 < 1e-4, "worst relative gradient error {:e} at gradient {:e}", worst.0, worst.1);
}

#[test]
fn gradients_match_finite_differences() {
    let mut cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    cfg.dense_widths = vec![5, 3, 1];
    check_gradients(cfg, 2, 11);
}

#[test]
fn gradients_match_finite_differences_stacked() {
    let mut cfg = EncoderDecoderConfig::new(3, 2, 2, 2, 3);
    cfg.dense_widths = vec![4, 1];
    check_gradients(cfg, 2, 23);
}

#[test]
fn gradients_match_finite_differences_default_head() {
    let cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    check_gradients(cfg, 2, 5);
}

#[test]
fn input_gain_equals_prescaled_inputs() {
    let cfg = EncoderDecoderConfig::new(3, 1, 1, 2, 4);
    let model = EncoderDecoderModel::<f64>::init(cfg.clone(), 8).unwrap();
    let unit = EncoderDecoderModel::from_parts(
        EncoderDecoderConfig { input_gain: 1.0, ..cfg },
        model.params().clone(),
        model.target,
    )
    .unwrap();
    let (x, _) = random_batch(2, 4, 2, 3);
    let x255: Vec<f64> = x.iter().map(|v| v * 255.0).collect();
    let a = model.predict(&x255, 2).unwrap();
    let b = unit.predict(&x, 2).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn zero_model_predicts_zero_and_gradient_hits_output_bias() {
    let cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    let model = EncoderDecoderModel::<f64>::zeros(cfg).unwrap();
    let (x, y) = random_batch(2, 3, 2, 1);
    let (out, cache) = model.forward(&x, 2).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
    let g = model.backward(&cache, &y).unwrap();
    let expected = y.iter().map(|q| -2.0 * q).sum::<f64>() / y.len() as f64;
    let head = g.head.last().unwrap();
    assert!((head.b[0] - expected).abs() < 1e-12);
    assert!(head.w.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_batch_has_same_gradient() {
    let cfg = EncoderDecoderConfig::new(3, 1, 1, 2, 4);
    let model = EncoderDecoderModel::<f64>::init(cfg, 3).unwrap();
    let (x, y) = random_batch(1, 4, 2, 9);
    let (_, c1) = model.forward(&x, 1).unwrap();
    let g1 = model.backward(&c1, &y).unwrap();
    let x2 = [x.clone(), x].concat();
    let y2 = [y.clone(), y].concat();
    let (_, c2) = model.forward(&x2, 2).unwrap();
    let g2 = model.backward(&c2, &y2).unwrap();
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }
}

#[test]
fn batch_forward_matches_single_samples() {
    let cfg = EncoderDecoderConfig::new(3, 2, 1, 2, 4);
    let model = EncoderDecoderModel::<f64>::init(cfg, 4).unwrap();
    let (x, _) = random_batch(3, 4, 2, 2);
    let all = model.predict(&x, 3).unwrap();
    for s in 0..3 {
        let one = model.predict(&x[s * 8..(s + 1) * 8], 1).unwrap();
        assert_eq!(&all[s * 4..(s + 1) * 4], one.as_slice());
    }
}

#[test]
fn stale_cache_is_rejected() {
    let cfg = EncoderDecoderConfig::new(2, 1, 1, 1, 2);
    let mut model = EncoderDecoderModel::<f64>::init(cfg, 1).unwrap();
    let (x, y) = random_batch(1, 2, 1, 0);
    let (_, cache) = model.forward(&x, 1).unwrap();
    model.params_mut().scale(0.5);
    assert!(model.backward(&cache, &y).is_err());
}

fn toy_dataset(n: usize, t: usize, seed: u64) -> WindowedDataset {
    // Target is a linear function of the first feature at each step.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = WindowedDataset::empty(t, 2);
    for s in 0..n {
        for _ in 0..t {
            let a: f64 = rng.random_range(0.0..1.0);
            ds.x.push(a);
            ds.x.push(rng.random_range(0.0..1.0));
            ds.y.push(40.0 * a + 5.0);
        }
        ds.groups.push(format!("d{s:03}"));
        ds.starts.push(0);
    }
    ds.features = vec![1, 2];
    ds
}

#[test]
fn training_reduces_error_and_is_thread_count_independent() {
    let train_set = toy_dataset(48, 3, 1);
    let val_set = toy_dataset(16, 3, 2);
    // Toy inputs are already in [0, 1].
    let cfg = EncoderDecoderConfig {
        input_gain: 1.0,
        ..EncoderDecoderConfig::new(8, 1, 1, 2, 3)
    };
    let tcfg = TrainConfig {
        max_epochs: 15,
        batch_size: 8,
        learning_rate: 5e-3,
        precision: Precision::Double,
        seed: 3,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_new::<f64>(cfg.clone(), &train_set, &val_set, &tcfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.report, b.report);
    let first = a.report.epochs[0].val_rmse;
    assert!(a.report.best_val_rmse < first * 0.8, "{first} -> {}", a.report.best_val_rmse);
    let best = &a.report.epochs[a.report.best_epoch - 1];
    assert_eq!(best.val_rmse, a.report.best_val_rmse);
}

#[test]
fn early_stopping_respects_patience() {
    let train_set = toy_dataset(16, 3, 1);
    let val_set = toy_dataset(8, 3, 2);
    let cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    // A vanishing learning rate never improves by min_delta.
    let tcfg = TrainConfig {
        max_epochs: 50,
        batch_size: 4,
        learning_rate: 1e-12,
        patience: 3,
        min_delta: 1.0,
        ..Default::default()
    };
    let out = train_new::<f32>(cfg, &train_set, &val_set, &tcfg).unwrap();
    assert!(out.report.early_stopped);
    assert_eq!(out.report.best_epoch, 1);
    assert_eq!(out.report.stopped_epoch, 4);
}

#[test]
fn divergence_is_reported() {
    let mut train_set = toy_dataset(8, 3, 1);
    train_set.y[0] = f64::INFINITY;
    let val_set = toy_dataset(4, 3, 2);
    let cfg = EncoderDecoderConfig::new(4, 1, 1, 2, 3);
    let tcfg = TrainConfig {
        max_epochs: 2,
        standardize_target: false,
        ..Default::default()
    };
    let err = train_new::<f64>(cfg, &train_set, &val_set, &tcfg).unwrap_err();
    assert!(matches!(err, crate::Error::Diverged { epoch: 1, .. }), "{err}");
}
