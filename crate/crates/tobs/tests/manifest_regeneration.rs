//! A manifest fully determines a run: rebuilding the pipeline from a saved
//! manifest reproduces the recorded result bit-for-bit.

use tobs::burgers::make_system;
use tobs::filter::{build_dataset, evaluate_rmse, train, DatagenConfig, Role, TrainConfig};
use tobs::io::ExperimentManifest;
use tobs::rng::derive_seed;

/// Train/evaluate exactly as described by the manifest's config snapshot
/// and seeds.
fn run_pipeline(manifest: &ExperimentManifest) -> f64 {
    let system = make_system(manifest.burgers.clone(), manifest.sensors.clone()).unwrap();
    let datagen = manifest.datagen.clone().unwrap();
    let train_cfg = manifest.train.clone().unwrap();
    let master = manifest.master_seed;

    let train_set = build_dataset(
        &system,
        &datagen,
        40,
        0.028,
        derive_seed(master, 200, 0),
        Role::Training,
    )
    .unwrap();
    let val_set = build_dataset(
        &system,
        &datagen,
        40,
        0.028,
        derive_seed(master, 200, 1),
        Role::Validation,
    )
    .unwrap();
    let net = train_cfg.build_network(train_set.input_dim()).unwrap();
    let result = train(net, &train_set, &train_cfg).unwrap();
    evaluate_rmse(&result.net, &val_set).unwrap()
}

#[test]
fn rerun_from_manifest_reproduces_stored_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs/regen/manifest.json");

    let mut manifest = ExperimentManifest::new(
        "regen-test",
        11,
        Default::default(),
        tobs::burgers::SensorLayout::case1(),
    );
    manifest.datagen = Some(DatagenConfig::default());
    manifest.train = Some(TrainConfig {
        hidden_layers: 2,
        hidden_width: 8,
        max_iterations: 25,
        init_seed: derive_seed(11, 300, 0),
        ..TrainConfig::default()
    });

    let rmse = run_pipeline(&manifest);
    manifest.results.insert("rmse".into(), rmse);
    manifest.save(&path).unwrap();

    let loaded = ExperimentManifest::load(&path).unwrap();
    let replayed = run_pipeline(&loaded);
    let stored = loaded.results["rmse"];
    assert_eq!(
        replayed.to_bits(),
        stored.to_bits(),
        "replayed RMSE {replayed} differs from stored {stored}"
    );
}
