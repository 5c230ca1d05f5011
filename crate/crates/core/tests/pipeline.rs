mod common;

use std::collections::BTreeMap;

use diskrul::dataset::{prepare_splits, SplitSpec, WindowSpec};
use diskrul::featsel::{rank_features, select_features, GbtConfig};
use diskrul::ingest::failure_census;
use diskrul::seqnet::{train_checkpoint, AnyCheckpoint};

use common::*;

#[test]
fn stored_fleet_matches_generated_fleet() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = generate_fleet(&fleet_spec(20, 40.0, 3));
    let store = ingest_fleet(dir.path(), &[&fleet]);

    let census = failure_census(&store, None).unwrap();
    assert_eq!(census.count("SYNTH-0001"), Some(20));

    let (features, direct) = histories(&fleet);
    let stored = stored_histories(&store, "SYNTH-0001", &features);
    assert_eq!(stored.len(), direct.len());
    let by_serial: BTreeMap<&str, _> = direct.iter().map(|h| (h.serial.as_str(), h)).collect();
    for h in &stored {
        let d = by_serial[h.serial.as_str()];
        assert_eq!(h.dates, d.dates);
        assert_eq!(h.rul, d.rul);
        // Values pass through CSV text; shortest round-trip formatting keeps them exact.
        assert_eq!(h.x, d.x);
    }
    let lifetimes: BTreeMap<String, u32> = fleet
        .drives
        .iter()
        .zip(&fleet.lifetimes)
        .map(|(d, &l)| (d.serial.clone(), l))
        .collect();
    for h in &stored {
        assert_eq!(h.rul[0], f64::from(lifetimes[&h.serial]));
        assert_eq!(*h.rul.last().unwrap(), 0.0);
    }
}

#[test]
fn feature_selection_finds_informative_attributes_after_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = generate_fleet(&fleet_spec(40, 60.0, 8));
    let store = ingest_fleet(dir.path(), &[&fleet]);
    let features = diskrul::preprocess::FeatureSet::new(fleet.attributes()).unwrap();
    let h = stored_histories(&store, "SYNTH-0001", &features);
    let (_, report) = rank_features(&h, &features, &GbtConfig::default(), 1).unwrap();
    let top = select_features(&report, 5).unwrap();
    for a in &fleet.informative {
        assert!(top.as_slice().contains(a), "{a} not in {:?}", top.as_slice());
    }
}

#[test]
fn trained_checkpoint_reloads_with_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = generate_fleet(&fleet_spec(24, 50.0, 4));
    let (features, h) = histories(&fleet);
    let prepared = prepare_splits(&h, &features, WindowSpec::new(10, 3), &SplitSpec::default()).unwrap();
    let s = &prepared.splits;
    let (model, report) =
        train_checkpoint(small_model(features.len(), 10), &s.train, &s.val, &quick_train(3)).unwrap();
    assert_eq!(report.epochs.len(), 3);

    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let back = AnyCheckpoint::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        back.predict_dataset(&s.test).unwrap(),
        model.predict_dataset(&s.test).unwrap()
    );
}

#[test]
fn splits_scale_with_training_drives_only() {
    let fleet = generate_fleet(&fleet_spec(20, 40.0, 6));
    let (features, h) = histories(&fleet);
    let prepared = prepare_splits(&h, &features, WindowSpec::new(5, 1), &SplitSpec::default()).unwrap();
    let train = &prepared.serials[0];
    for (k, attr) in features.iter().enumerate() {
        let lo = h
            .iter()
            .filter(|d| train.contains(&d.serial))
            .flat_map(|d| d.x.column(k))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(prepared.scaler.min[k], lo, "attribute {attr}");
    }
    let x = &prepared.splits.train.x;
    assert!(x.iter().all(|v| (0.0..=255.0).contains(v)));
}
