use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{Error, Result};

/// Fractions of drives assigned to each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub k_folds: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.70,
            val: 0.15,
            test: 0.15,
            k_folds: None,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::domain("split fractions must be positive"));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::domain("split fractions must sum to 1"));
        }
        if matches!(self.k_folds, Some(k) if k < 2) {
            return Err(Error::domain("k_folds must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

fn shuffled(serials: impl IntoIterator<Item = String>, seed: u64) -> Vec<String> {
    let mut v: Vec<String> = serials.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Partitions drive serials into train/val/test. Validation gets
/// `floor(val * n)` drives, training `floor(train * n)`, test the remainder;
/// each split keeps at least one drive.
pub fn split_serials(
    serials: impl IntoIterator<Item = String>,
    spec: &SplitSpec,
) -> Result<[BTreeSet<String>; 3]> {
    spec.validate()?;
    let order = shuffled(serials, spec.seed);
    let n = order.len();
    if n < 3 {
        return Err(Error::domain(format!("need at least 3 drives to split, got {n}")));
    }
    // The epsilon keeps e.g. 0.7 * 10 from landing just below 7.
    let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let mut n_val = floor(spec.val).max(1);
    let mut n_train = floor(spec.train).max(1);
    while n_train + n_val > n - 1 {
        if n_train > n_val {
            n_train -= 1;
        } else {
            n_val -= 1;
        }
    }
    let train = order[..n_train].iter().cloned().collect();
    let val = order[n_train..n_train + n_val].iter().cloned().collect();
    let test = order[n_train + n_val..].iter().cloned().collect();
    Ok([train, val, test])
}

/// Groups every window of a drive into exactly one of train/val/test.
pub fn split_by_drive(dataset: &WindowedDataset, spec: &SplitSpec) -> Result<DatasetSplits> {
    let [train, val, test] = split_serials(dataset.serials(), spec)?;
    Ok(DatasetSplits {
        train: dataset.subset(&train),
        val: dataset.subset(&val),
        test: dataset.subset(&test),
    })
}

/// `k` near-equal folds of shuffled serials (sizes differ by at most one).
pub fn kfold_serials(
    serials: impl IntoIterator<Item = String>,
    k: usize,
    seed: u64,
) -> Result<Vec<BTreeSet<String>>> {
    if k < 2 {
        return Err(Error::domain("k must be at least 2"));
    }
    let order = shuffled(serials, seed);
    if order.len() < k {
        return Err(Error::domain(format!(
            "{} drives cannot fill {k} folds",
            order.len()
        )));
    }
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[at..at + size].iter().cloned().collect());
        at += size;
    }
    Ok(folds)
}

/// `(train, validation)` pairs where pair `i` validates on fold `i`.
pub fn kfold_by_drive(
    dataset: &WindowedDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(WindowedDataset, WindowedDataset)>> {
    let folds = kfold_serials(dataset.serials(), k, seed)?;
    Ok(folds
        .iter()
        .map(|val| {
            let train: BTreeSet<String> = dataset.serials().difference(val).cloned().collect();
            (dataset.subset(&train), dataset.subset(val))
        })
        .collect())
}
