//! Training/validation data for the deep filter.
//!
//! Each sample pairs a flattened output window `z = {y(s+k); 0 <= k <= K}`
//! (time-major: time index outer, sensor index inner) with the value of the
//! targeted state variable at the window end, `u_target(s+K)`. Per random
//! trajectory three windows are taken: `s = 0` plus two distinct random
//! starts. Measurement noise, when enabled, is added to the outputs before
//! flattening; labels always come from the noise-free state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burgers::{sample_fourier_initial, BurgersSystem};
use crate::dynamics::{observe_trajectory, propagate, OutputSequence, SystemModel};
use crate::error::{Error, Result};
use crate::filter::mlp::Mlp;
use crate::rng::{derive_seed, rng_from_seed, streams};

/// Windows taken per generated trajectory: `s = 0` plus two random starts.
pub const WINDOWS_PER_TRAJECTORY: usize = 3;

/// Parameters of the random-trajectory data generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    /// Fourier mode count of the random initial conditions.
    pub fourier_modes: usize,
    /// Coefficient standard deviation of the random initial conditions.
    pub fourier_sigma: f64,
    /// Window horizon `K`; a window holds `K + 1` output samples.
    pub horizon: usize,
    /// Targeted state variable (1-based).
    pub target: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            fourier_modes: crate::burgers::DEFAULT_FOURIER_MODES,
            fourier_sigma: crate::burgers::DEFAULT_FOURIER_SIGMA,
            horizon: 9,
            target: 25,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self, system: &BurgersSystem) -> Result<()> {
        let mut violations = Vec::new();
        if self.fourier_modes < 1 {
            violations.push(format!(
                "fourier_modes must be >= 1, got {}",
                self.fourier_modes
            ));
        }
        if !(self.fourier_sigma.is_finite() && self.fourier_sigma > 0.0) {
            violations.push(format!(
                "fourier_sigma must be finite and > 0, got {}",
                self.fourier_sigma
            ));
        }
        let nt = system.config().time_steps;
        if self.horizon < 1 {
            violations.push(format!("horizon K must be >= 1, got {}", self.horizon));
        } else if self.horizon + 1 > nt {
            violations.push(format!(
                "window length K+1 = {} exceeds trajectory length Nt = {nt}",
                self.horizon + 1
            ));
        } else if nt - self.horizon < 2 {
            violations.push(format!(
                "need at least two admissible random window starts, got range 1..={}",
                nt - self.horizon
            ));
        }
        let n = system.state_dim();
        if self.target < 1 || self.target > n {
            violations.push(format!("target must be in 1..={n}, got {}", self.target));
        }
        Error::check_violations(violations)
    }

    /// Flattened window dimension `p = m (K + 1)`.
    pub fn input_dim(&self, output_dim: usize) -> usize {
        output_dim * (self.horizon + 1)
    }
}

/// Whether a dataset is meant for fitting or for held-out evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Training,
    Validation,
}

/// How a dataset was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub noise_sd: f64,
    /// Per-sample originating trajectory seed.
    pub trajectory_seeds: Vec<u64>,
    /// Per-sample window start `s`.
    pub window_starts: Vec<usize>,
}

impl Provenance {
    fn raw(count: usize) -> Self {
        Self {
            master_seed: 0,
            noise_sd: 0.0,
            trajectory_seeds: vec![0; count],
            window_starts: vec![0; count],
        }
    }
}

/// A set of `(z, u(z))` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    labels: DVector<f64>,
    pub provenance: Provenance,
    pub role: Role,
}

impl Dataset {
    /// Wrap explicit samples (columns of `inputs`).
    pub fn from_raw(inputs: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if inputs.ncols() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset labels",
                expected: inputs.ncols(),
                got: labels.len(),
            });
        }
        let count = labels.len();
        Ok(Self {
            inputs,
            labels,
            provenance: Provenance::raw(count),
            role: Role::Training,
        })
    }

    pub fn from_parts(
        inputs: DMatrix<f64>,
        labels: DVector<f64>,
        provenance: Provenance,
        role: Role,
    ) -> Result<Self> {
        if inputs.ncols() != labels.len()
            || provenance.trajectory_seeds.len() != labels.len()
            || provenance.window_starts.len() != labels.len()
        {
            return Err(Error::DimensionMismatch {
                what: "dataset parts",
                expected: inputs.ncols(),
                got: labels.len(),
            });
        }
        Ok(Self {
            inputs,
            labels,
            provenance,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (DVector<f64>, f64) {
        (self.inputs.column(i).into_owned(), self.labels[i])
    }

    /// Reordered copy (used by the permutation-invariance checks).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "permutation",
                expected: self.len(),
                got: perm.len(),
            });
        }
        let inputs = DMatrix::from_fn(self.input_dim(), self.len(), |r, c| {
            self.inputs[(r, perm[c])]
        });
        let labels = DVector::from_fn(self.len(), |i, _| self.labels[perm[i]]);
        let provenance = Provenance {
            master_seed: self.provenance.master_seed,
            noise_sd: self.provenance.noise_sd,
            trajectory_seeds: perm
                .iter()
                .map(|&i| self.provenance.trajectory_seeds[i])
                .collect(),
            window_starts: perm
                .iter()
                .map(|&i| self.provenance.window_starts[i])
                .collect(),
        };
        Ok(Self {
            inputs,
            labels,
            provenance,
            role: self.role,
        })
    }
}

/// Flatten the window `{y(s+k); 0 <= k <= K}` time-major.
pub fn flatten_window(outputs: &OutputSequence, start: usize, horizon: usize) -> Result<DVector<f64>> {
    if start + horizon > outputs.horizon() {
        return Err(Error::DimensionMismatch {
            what: "window range",
            expected: outputs.horizon(),
            got: start + horizon,
        });
    }
    let m = outputs.output_dim();
    let mut z = DVector::zeros(m * (horizon + 1));
    for k in 0..=horizon {
        let y = outputs.output(start + k);
        for j in 0..m {
            z[k * m + j] = y[j];
        }
    }
    Ok(z)
}

/// Generate `count` trajectories from the Fourier sampler and take three
/// windows from each (`s = 0` and two distinct random starts in
/// `1..=Nt-K`), producing `3 * count` samples.
pub fn build_dataset(
    system: &BurgersSystem,
    gen: &DatagenConfig,
    count: usize,
    noise_sd: f64,
    master_seed: u64,
    role: Role,
) -> Result<Dataset> {
    gen.validate(system)?;
    if count < 1 {
        return Err(Error::InvalidConfig {
            violations: vec!["trajectory count must be >= 1".into()],
        });
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::InvalidConfig {
            violations: vec![format!(
                "noise_sd must be finite and nonnegative, got {noise_sd}"
            )],
        });
    }

    let config = system.config().clone();
    let nt = config.time_steps;
    let horizon = gen.horizon;
    let max_start = nt - horizon;
    let m = system.output_dim();
    let p = gen.input_dim(m);

    struct TrajectorySamples {
        seed: u64,
        windows: Vec<(usize, DVector<f64>, f64)>,
    }

    let per_trajectory: Vec<TrajectorySamples> = (0..count)
        .into_par_iter()
        .map(|t| -> Result<TrajectorySamples> {
            let traj_seed = derive_seed(master_seed, streams::TRAJECTORY, t as u64);
            let noise_seed = derive_seed(master_seed, streams::NOISE, t as u64);
            let window_seed = derive_seed(master_seed, streams::WINDOW, t as u64);

            let x0 =
                sample_fourier_initial(&config, gen.fourier_modes, gen.fourier_sigma, traj_seed)?;
            let traj = propagate(system, &x0, nt)?;
            let outputs = observe_trajectory(system, &traj, noise_sd, noise_seed)?;

            let mut rng = rng_from_seed(window_seed);
            let s1 = rng.random_range(1..=max_start);
            let s2 = loop {
                let candidate = rng.random_range(1..=max_start);
                if candidate != s1 {
                    break candidate;
                }
            };

            let windows = [0, s1, s2]
                .iter()
                .map(|&s| {
                    let z = flatten_window(&outputs, s, horizon)?;
                    let label = traj.state(s + horizon)[gen.target - 1];
                    Ok((s, z, label))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TrajectorySamples {
                seed: traj_seed,
                windows,
            })
        })
        .collect::<Result<_>>()?;

    let total = count * WINDOWS_PER_TRAJECTORY;
    let mut inputs = DMatrix::zeros(p, total);
    let mut labels = DVector::zeros(total);
    let mut trajectory_seeds = Vec::with_capacity(total);
    let mut window_starts = Vec::with_capacity(total);
    let mut col = 0;
    for traj in &per_trajectory {
        for (s, z, label) in &traj.windows {
            inputs.set_column(col, z);
            labels[col] = *label;
            trajectory_seeds.push(traj.seed);
            window_starts.push(*s);
            col += 1;
        }
    }

    Ok(Dataset {
        inputs,
        labels,
        provenance: Provenance {
            master_seed,
            noise_sd,
            trajectory_seeds,
            window_starts,
        },
        role,
    })
}

/// Root-mean-square prediction error over a dataset.
pub fn evaluate_rmse(net: &Mlp, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidConfig {
            violations: vec!["dataset must not be empty".into()],
        });
    }
    let predictions = net.forward_batch(data.inputs())?;
    let sum_sq = (&predictions - data.labels()).norm_squared();
    Ok((sum_sq / data.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::{make_system, BurgersConfig, SensorLayout};

    fn case1_system() -> BurgersSystem {
        make_system(BurgersConfig::default(), SensorLayout::case1()).unwrap()
    }

    #[test]
    fn single_trajectory_bookkeeping() {
        let system = case1_system();
        let gen = DatagenConfig::default();
        let data = build_dataset(&system, &gen, 1, 0.0, 42, Role::Training).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.input_dim(), 40);

        // Recompute the trajectory independently and check windows + labels
        // are read off it bit-exactly.
        let config = system.config();
        let traj_seed = data.provenance.trajectory_seeds[0];
        let x0 = sample_fourier_initial(config, gen.fourier_modes, gen.fourier_sigma, traj_seed)
            .unwrap();
        let traj = propagate(&system, &x0, config.time_steps).unwrap();
        for i in 0..3 {
            let s = data.provenance.window_starts[i];
            let (z, label) = data.sample(i);
            assert_eq!(label, traj.state(s + gen.horizon)[gen.target - 1]);
            for k in 0..=gen.horizon {
                let y = system.observe(traj.state(s + k));
                for j in 0..4 {
                    assert_eq!(z[k * 4 + j], y[j]);
                }
            }
        }
        assert_eq!(data.provenance.window_starts[0], 0);
        assert_ne!(
            data.provenance.window_starts[1],
            data.provenance.window_starts[2]
        );
        assert!(data.provenance.window_starts[1] >= 1);
        assert!(data.provenance.window_starts[1] <= config.time_steps - gen.horizon);
    }

    #[test]
    fn three_samples_per_trajectory() {
        let system = case1_system();
        let data = build_dataset(
            &system,
            &DatagenConfig::default(),
            7,
            0.0,
            3,
            Role::Validation,
        )
        .unwrap();
        assert_eq!(data.len(), 21);
        assert_eq!(data.role, Role::Validation);
    }

    #[test]
    fn generation_is_deterministic() {
        let system = case1_system();
        let gen = DatagenConfig::default();
        let a = build_dataset(&system, &gen, 4, 0.028, 9, Role::Training).unwrap();
        let b = build_dataset(&system, &gen, 4, 0.028, 9, Role::Training).unwrap();
        assert_eq!(a, b);
        let c = build_dataset(&system, &gen, 4, 0.028, 10, Role::Training).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_window_is_rejected() {
        let system = case1_system();
        let gen = DatagenConfig {
            horizon: 100,
            ..DatagenConfig::default()
        };
        assert!(build_dataset(&system, &gen, 1, 0.0, 0, Role::Training).is_err());
    }

    #[test]
    fn noise_perturbs_inputs_but_not_labels() {
        let system = case1_system();
        let gen = DatagenConfig::default();
        let clean = build_dataset(&system, &gen, 2, 0.0, 5, Role::Training).unwrap();
        let noisy = build_dataset(&system, &gen, 2, 0.028, 5, Role::Training).unwrap();
        assert_eq!(clean.labels(), noisy.labels());
        assert_ne!(clean.inputs(), noisy.inputs());
        // Window starts coincide because they come from a separate stream.
        assert_eq!(
            clean.provenance.window_starts,
            noisy.provenance.window_starts
        );
    }

    #[test]
    fn rmse_of_perfect_and_constant_predictors() {
        let net = {
            let mut net = Mlp::new(&[2, 1], 0).unwrap();
            net.set_params_from_vec(&nalgebra::dvector![0.0, 0.0, 0.0])
                .unwrap();
            net
        };
        // Constant-zero predictor on labels all equal to c gives |c|.
        let c = -0.37;
        let inputs = DMatrix::zeros(2, 5);
        let labels = DVector::from_element(5, c);
        let data = Dataset::from_raw(inputs, labels).unwrap();
        let rmse = evaluate_rmse(&net, &data).unwrap();
        assert!((rmse - c.abs()).abs() < 1e-15);

        // Perfect predictor gives zero.
        let labels = DVector::zeros(5);
        let data = Dataset::from_raw(DMatrix::zeros(2, 5), labels).unwrap();
        assert_eq!(evaluate_rmse(&net, &data).unwrap(), 0.0);
    }

    #[test]
    fn flatten_window_is_time_major() {
        let outputs = OutputSequence::from_outputs(
            vec![
                nalgebra::dvector![1.0, 2.0],
                nalgebra::dvector![3.0, 4.0],
                nalgebra::dvector![5.0, 6.0],
            ],
            None,
        )
        .unwrap();
        let z = flatten_window(&outputs, 1, 1).unwrap();
        assert_eq!(z.as_slice(), &[3.0, 4.0, 5.0, 6.0]);
        assert!(flatten_window(&outputs, 2, 1).is_err());
    }
}
