//! Feature ranking with gradient-boosted regression trees.
//!
//! Trees are fit on squared error to the running residual, each scaled by the
//! learning rate. A feature's importance weight is the number of splits that
//! use it across the ensemble; the summed split gain breaks ties.

mod tree;

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tree::{Node, RegressionTree};

use crate::error::{Error, Result};
use crate::preprocess::{DriveHistory, FeatureSet};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Larger inputs are uniformly subsampled (seeded) to this many rows.
    pub max_rows: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 50,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            max_rows: 200_000,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 || self.max_rows == 0 {
            return Err(Error::domain(
                "gbt: n_trees, max_depth, min_samples_leaf and max_rows must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::domain(format!(
                "gbt: learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
    /// Training mean squared error after the base score and after each tree
    /// (`n_trees + 1` entries), on the rows actually used for fitting.
    pub train_mse: Vec<f64>,
}

impl GbtEnsemble {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.predict(row))
                .sum::<f64>()
    }
}

/// Fits a boosted ensemble of depth-limited regression trees on squared error.
pub fn fit_gbt(x: &Matrix<f64>, y: &[f64], config: &GbtConfig, seed: u64) -> Result<GbtEnsemble> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(Error::domain(format!(
            "gbt: {} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() < 2 * config.min_samples_leaf {
        return Err(Error::domain(format!(
            "gbt: need at least {} rows, got {}",
            2 * config.min_samples_leaf,
            x.rows()
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("gbt: inputs contain non-finite values"));
    }

    let rows: Vec<usize> = if x.rows() > config.max_rows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, x.rows(), config.max_rows).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..x.rows()).collect()
    };
    let columns: Vec<Vec<f64>> = (0..x.cols())
        .map(|c| rows.iter().map(|&r| x.get(r, c)).collect())
        .collect();
    let target: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let sorted = tree::presort(&columns);
    let data = tree::TrainingData {
        columns: &columns,
        sorted: &sorted,
    };

    let n = target.len() as f64;
    let base_score = target.iter().sum::<f64>() / n;
    let mut pred = vec![base_score; target.len()];
    let mse = |pred: &[f64]| {
        target
            .iter()
            .zip(pred)
            .map(|(t, p)| (t - p) * (t - p))
            .sum::<f64>()
            / n
    };
    let mut train_mse = vec![mse(&pred)];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut residual = vec![0.0; target.len()];
    for _ in 0..config.n_trees {
        for ((r, t), p) in residual.iter_mut().zip(&target).zip(&pred) {
            *r = t - p;
        }
        let (tree, fitted) = tree::fit_tree(&data, &residual, config.max_depth, config.min_samples_leaf);
        for (p, f) in pred.iter_mut().zip(&fitted) {
            *p += config.learning_rate * f;
        }
        train_mse.push(mse(&pred));
        trees.push(tree);
    }
    Ok(GbtEnsemble {
        base_score,
        learning_rate: config.learning_rate,
        n_features: x.cols(),
        trees,
        train_mse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub attribute: u16,
    /// Number of splits on this feature across all trees.
    pub weight: u64,
    /// Summed squared-error reduction of those splits.
    pub gain: f64,
}

/// Every feature of the ensemble, most important first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, attribute: u16) -> Option<usize> {
        self.entries.iter().position(|e| e.attribute == attribute)
    }

    pub fn total_gain(&self) -> f64 {
        self.entries.iter().map(|e| e.gain).sum()
    }

    /// `attribute,weight,gain` rows in rank order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "attribute,weight,gain")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.attribute, e.weight, e.gain)?;
        }
        Ok(())
    }
}

/// Split-count importance. Ties in weight fall back to higher gain, then lower
/// attribute number.
pub fn importance(ensemble: &GbtEnsemble, features: &FeatureSet) -> Result<ImportanceReport> {
    if features.len() != ensemble.n_features {
        return Err(Error::domain(format!(
            "ensemble has {} features, feature set names {}",
            ensemble.n_features,
            features.len()
        )));
    }
    let mut entries: Vec<FeatureImportance> = features
        .iter()
        .map(|&attribute| FeatureImportance {
            attribute,
            weight: 0,
            gain: 0.0,
        })
        .collect();
    for tree in &ensemble.trees {
        for (f, _, gain) in tree.splits() {
            entries[f].weight += 1;
            entries[f].gain += gain;
        }
    }
    entries.sort_by(|a, b| {
        b.weight
            .cmp(&a.weight)
            .then(b.gain.total_cmp(&a.gain))
            .then(a.attribute.cmp(&b.attribute))
    });
    Ok(ImportanceReport { entries })
}

/// The `k` highest-ranked attributes, in ascending attribute order.
pub fn select_features(report: &ImportanceReport, k: usize) -> Result<FeatureSet> {
    if k == 0 || k > report.len() {
        return Err(Error::domain(format!(
            "k = {k} outside 1..={}",
            report.len()
        )));
    }
    let mut picked: Vec<u16> = report.entries[..k].iter().map(|e| e.attribute).collect();
    picked.sort_unstable();
    FeatureSet::new(picked)
}

/// Stacks every day of every labeled history into a design matrix and RUL target.
pub fn stack_histories(histories: &[DriveHistory]) -> Result<(Matrix<f64>, Vec<f64>)> {
    let cols = histories.first().map_or(0, |h| h.x.cols());
    let mut data = Vec::new();
    let mut y = Vec::new();
    for h in histories {
        if !h.is_labeled() {
            return Err(Error::domain(format!("drive {} is not labeled", h.serial)));
        }
        if h.x.cols() != cols {
            return Err(Error::domain("histories disagree on feature count"));
        }
        data.extend_from_slice(h.x.as_slice());
        y.extend_from_slice(&h.rul);
    }
    Ok((Matrix::from_vec(y.len(), cols, data)?, y))
}

/// Ranks `features` by regressing RUL on the (scaled) histories.
pub fn rank_features(
    histories: &[DriveHistory],
    features: &FeatureSet,
    config: &GbtConfig,
    seed: u64,
) -> Result<(GbtEnsemble, ImportanceReport)> {
    let (x, y) = stack_histories(histories)?;
    let ensemble = fit_gbt(&x, &y, config, seed)?;
    let report = importance(&ensemble, features)?;
    Ok((ensemble, report))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn noise_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn identity_target() -> (Matrix<f64>, Vec<f64>) {
        let x = noise_matrix(300, 15, 3);
        let y = x.column(3).collect();
        (x, y)
    }

    fn sse_of_split(x: &Matrix<f64>, y: &[f64], f: usize, thr: f64) -> f64 {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for (i, &t) in y.iter().enumerate() {
            if x.get(i, f) <= thr { l.push(t) } else { r.push(t) }
        }
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|t| (t - m) * (t - m)).sum::<f64>()
        };
        sse(&l) + sse(&r)
    }

    /// Brute force over every feature and every midpoint between distinct
    /// values; returns (feature, threshold, sse) of the best admissible split.
    fn exhaustive_best_split(x: &Matrix<f64>, y: &[f64], min_leaf: usize) -> (usize, f64, f64) {
        let mut best = (usize::MAX, f64::NAN, f64::INFINITY);
        for f in 0..x.cols() {
            let mut vals: Vec<f64> = x.column(f).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = w[0] + (w[1] - w[0]) / 2.0;
                let nl = x.column(f).filter(|v| *v <= thr).count();
                if nl < min_leaf || y.len() - nl < min_leaf {
                    continue;
                }
                let s = sse_of_split(x, y, f, thr);
                if s < best.2 - 1e-12 {
                    best = (f, thr, s);
                }
            }
        }
        best
    }

    #[test]
    fn identity_target_dominates() {
        let (x, y) = identity_target();
        let e = fit_gbt(&x, &y, &GbtConfig::default(), 0).unwrap();
        let fs = FeatureSet::new((0..15).collect()).unwrap();
        let rep = importance(&e, &fs).unwrap();
        assert_eq!(rep.entries[0].attribute, 3);
        let f3 = rep.entries[0].gain;
        assert!(f3 >= 0.9 * rep.total_gain(), "{f3} / {}", rep.total_gain());
        assert_eq!(select_features(&rep, 1).unwrap().as_slice(), &[3]);

        // Root split of the first tree agrees with the brute-force oracle.
        let residual: Vec<f64> = y.iter().map(|t| t - e.base_score).collect();
        let (f, thr, _) = exhaustive_best_split(&x, &residual, 5);
        match &e.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, f);
                assert_eq!(*threshold, thr);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_point_stump_at_midpoint() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 7.0, 3.0, 7.0]).unwrap();
        let y = [10.0, 20.0];
        let cfg = GbtConfig {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            ..Default::default()
        };
        let e = fit_gbt(&x, &y, &cfg, 0).unwrap();
        let residual: Vec<f64> = y.iter().map(|t| t - e.base_score).collect();
        let (f, thr, _) = exhaustive_best_split(&x, &residual, 1);
        assert_eq!((f, thr), (0, 2.0));
        assert_eq!(e.trees.len(), 1);
        assert_eq!(e.trees[0].splits().collect::<Vec<_>>().len(), 1);
        let (feature, threshold, _) = e.trees[0].splits().next().unwrap();
        assert_eq!((feature, threshold), (f, thr));
    }

    #[test]
    fn constant_target_has_no_importance() {
        let x = noise_matrix(50, 4, 1);
        let y = vec![0.1; 50];
        let e = fit_gbt(&x, &y, &GbtConfig::default(), 0).unwrap();
        let rep = importance(&e, &FeatureSet::new(vec![1, 2, 3, 4]).unwrap()).unwrap();
        assert!(rep.entries.iter().all(|r| r.weight == 0 && r.gain == 0.0));
        assert_eq!(e.trees.len(), 50);
    }

    #[test]
    fn single_informative_feature_gets_every_stump() {
        // Only column 1 varies, so every stump must split on it.
        let mut x = Matrix::zeros(40, 3);
        let mut y = Vec::new();
        for i in 0..40 {
            x.set(i, 1, i as f64);
            y.push((i as f64).powi(2));
        }
        let cfg = GbtConfig { n_trees: 7, max_depth: 1, ..Default::default() };
        let e = fit_gbt(&x, &y, &cfg, 0).unwrap();
        let rep = importance(&e, &FeatureSet::new(vec![10, 20, 30]).unwrap()).unwrap();
        assert_eq!(rep.entries[0].attribute, 20);
        assert_eq!(rep.entries[0].weight, 7);
    }

    #[test]
    fn training_error_never_increases() {
        let (x, mut y) = identity_target();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        y.iter_mut().for_each(|v| *v = (*v * 6.0).sin() + 0.3 * rng.random::<f64>());
        let e = fit_gbt(&x, &y, &GbtConfig::default(), 0).unwrap();
        for w in e.train_mse.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
        }
    }

    #[test]
    fn zero_importance_column_is_inert() {
        let (x, y) = identity_target();
        let cfg = GbtConfig { n_trees: 10, ..Default::default() };
        let e = fit_gbt(&x, &y, &cfg, 0).unwrap();
        let fs = FeatureSet::new((0..15).collect()).unwrap();
        let rep = importance(&e, &fs).unwrap();
        let unused = rep.entries.iter().find(|r| r.weight == 0).expect("some unused column").attribute as usize;
        let mut permuted = x.clone();
        for r in 0..x.rows() {
            permuted.set(r, unused, x.get(x.rows() - 1 - r, unused));
        }
        for r in 0..x.rows() {
            assert_eq!(e.predict(x.row(r)), e.predict(permuted.row(r)));
        }
    }

    #[test]
    fn deterministic_and_subsampled() {
        let (x, y) = identity_target();
        let cfg = GbtConfig { n_trees: 5, max_rows: 100, ..Default::default() };
        let a = fit_gbt(&x, &y, &cfg, 42).unwrap();
        let b = fit_gbt(&x, &y, &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = fit_gbt(&x, &y, &cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn select_k_bounds() {
        let (x, y) = identity_target();
        let e = fit_gbt(&x, &y, &GbtConfig { n_trees: 3, ..Default::default() }, 0).unwrap();
        let fs = FeatureSet::new((100..115).collect()).unwrap();
        let rep = importance(&e, &fs).unwrap();
        assert_eq!(select_features(&rep, 15).unwrap().as_slice(), fs.as_slice());
        assert!(select_features(&rep, 0).is_err());
        assert!(select_features(&rep, 16).is_err());
    }

    #[test]
    fn too_few_rows() {
        let x = noise_matrix(9, 2, 0);
        assert!(fit_gbt(&x, &[0.0; 9], &GbtConfig::default(), 0).is_err());
    }
}
