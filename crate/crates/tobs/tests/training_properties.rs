//! Statistical training properties at reduced scale.

use tobs::burgers::{make_system, BurgersConfig, SensorLayout};
use tobs::filter::{build_dataset, evaluate_rmse, train, DatagenConfig, Role, TrainConfig};
use tobs::rng::derive_seed;

/// Over several training seeds, the mean validation RMSE with sensor noise
/// is at least the noise-free one.
#[test]
fn noisy_rmse_dominates_clean_rmse() {
    let system = make_system(BurgersConfig::default(), SensorLayout::case1()).unwrap();
    let gen = DatagenConfig::default();
    let trajectories = 500;

    let mut mean_clean = 0.0;
    let mut mean_noisy = 0.0;
    let seeds = 5u64;
    for seed in 0..seeds {
        let cfg = TrainConfig {
            max_iterations: 60,
            init_seed: derive_seed(seed, 300, 0),
            ..TrainConfig::default()
        };
        for (noise_sd, accumulator) in [(0.0, &mut mean_clean), (0.028, &mut mean_noisy)] {
            let train_set = build_dataset(
                &system,
                &gen,
                trajectories,
                noise_sd,
                derive_seed(seed, 200, 0),
                Role::Training,
            )
            .unwrap();
            let val_set = build_dataset(
                &system,
                &gen,
                trajectories,
                noise_sd,
                derive_seed(seed, 200, 1),
                Role::Validation,
            )
            .unwrap();
            let net = cfg.build_network(train_set.input_dim()).unwrap();
            let result = train(net, &train_set, &cfg).unwrap();
            *accumulator += evaluate_rmse(&result.net, &val_set).unwrap() / seeds as f64;
        }
    }
    assert!(
        mean_noisy >= mean_clean,
        "mean noisy RMSE {mean_noisy:.5} below mean clean RMSE {mean_clean:.5}"
    );
}
