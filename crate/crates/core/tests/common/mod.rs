#![allow(dead_code)]

use std::path::Path;

use diskrul::ingest::{extract_histories, ingest_csv, Store};
use diskrul::preprocess::{prepare_histories, DriveHistory, FeatureSet, Labeling};
use diskrul::seqnet::{EncoderDecoderConfig, Precision, TrainConfig};
use diskrul::synth::{generate, SynthFleet, SynthSpec};

pub fn fleet_spec(n: usize, mean_life: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        n_drives: n,
        mean_lifetime_days: mean_life,
        missing_rate: 0.05,
        seed,
        ..Default::default()
    }
}

/// Writes the fleet to CSV, ingests it into a store under `dir`, and returns
/// the store.
pub fn ingest_fleet(dir: &Path, fleets: &[&SynthFleet]) -> Store {
    let store = Store::open(dir.join("store"));
    let mut paths = Vec::new();
    for (i, f) in fleets.iter().enumerate() {
        let p = dir.join(format!("fleet{i}.csv"));
        f.write_csv(&p).unwrap();
        paths.push(p);
    }
    ingest_csv(&store, &paths, None).unwrap();
    store
}

pub fn histories(fleet: &SynthFleet) -> (FeatureSet, Vec<DriveHistory>) {
    let features = FeatureSet::new(fleet.attributes()).unwrap();
    let (h, skipped) = prepare_histories(&fleet.drives, &features, Labeling::FailedOnly).unwrap();
    assert!(skipped.is_empty());
    (features, h)
}

pub fn stored_histories(store: &Store, model: &str, features: &FeatureSet) -> Vec<DriveHistory> {
    let ex = extract_histories(store, model, 2013..=2099).unwrap();
    prepare_histories(&ex.drives, features, Labeling::FailedOnly).unwrap().0
}

pub fn small_model(features: usize, t: usize) -> EncoderDecoderConfig {
    EncoderDecoderConfig::new(24, 1, 1, features, t)
}

pub fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        batch_size: 16,
        learning_rate: 3e-3,
        patience: 8,
        precision: Precision::Single,
        seed: 11,
        ..Default::default()
    }
}

pub fn generate_fleet(spec: &SynthSpec) -> SynthFleet {
    generate(spec).unwrap()
}
