//! Discrete-time system abstraction and trajectory containers.
//!
//! A system is the pair of maps `step: R^n -> R^n` and `observe: R^n -> R^m`.
//! Trajectories and output sequences are immutable once built, so they can be
//! shared freely across threads.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A deterministic discrete-time system with output map.
///
/// Implementations must be pure: identical inputs give bit-identical
/// outputs, and `step`/`observe` must return vectors of length
/// `state_dim()`/`output_dim()` respectively.
pub trait SystemModel: Sync {
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Output dimension `m`.
    fn output_dim(&self) -> usize;
    /// One step of the state recursion.
    fn step(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Output map evaluated at a state.
    fn observe(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// A linear system `x(k+1) = A x(k)`, `y(k) = H x(k)`.
///
/// Used as a test oracle (the exact Gramian has a closed form) and for any
/// caller that wants the linear special case.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                what: "state matrix (must be square)",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if h.ncols() != a.ncols() {
            return Err(Error::DimensionMismatch {
                what: "output matrix columns",
                expected: a.ncols(),
                got: h.ncols(),
            });
        }
        Ok(Self { a, h })
    }

    pub fn state_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn output_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl SystemModel for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.h.nrows()
    }

    fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }
}

/// States `x(0), ..., x(K)` of one propagated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Build from raw states (e.g. when loading from disk). At least one
    /// state is required and all states must share a dimension.
    pub fn from_states(states: Vec<DVector<f64>>) -> Result<Self> {
        let n = match states.first() {
            Some(s) => s.len(),
            None => {
                return Err(Error::InvalidConfig {
                    violations: vec!["trajectory must contain at least one state".into()],
                })
            }
        };
        for s in &states {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "trajectory state",
                    expected: n,
                    got: s.len(),
                });
            }
        }
        Ok(Self { states })
    }

    /// Horizon `K`: the trajectory holds `K + 1` states.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Record of the noise applied to an output sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseRecord {
    pub seed: u64,
    pub sd: f64,
}

/// Outputs `y(0), ..., y(K)`, optionally with measurement noise.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputSequence {
    outputs: Vec<DVector<f64>>,
    noise: Option<NoiseRecord>,
}

impl OutputSequence {
    pub fn from_outputs(outputs: Vec<DVector<f64>>, noise: Option<NoiseRecord>) -> Result<Self> {
        let m = match outputs.first() {
            Some(y) => y.len(),
            None => {
                return Err(Error::InvalidConfig {
                    violations: vec!["output sequence must contain at least one sample".into()],
                })
            }
        };
        for y in &outputs {
            if y.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "output sample",
                    expected: m,
                    got: y.len(),
                });
            }
        }
        Ok(Self { outputs, noise })
    }

    pub fn horizon(&self) -> usize {
        self.outputs.len() - 1
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn output(&self, k: usize) -> &DVector<f64> {
        &self.outputs[k]
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn noise(&self) -> Option<NoiseRecord> {
        self.noise
    }
}

/// Propagate `x(k+1) = step(x(k))` for `horizon` steps.
///
/// Returns `horizon + 1` states starting at `x0`. Fails if a produced state
/// contains NaN or infinity, naming the offending step.
pub fn propagate(model: &dyn SystemModel, x0: &DVector<f64>, horizon: usize) -> Result<Trajectory> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if horizon < 1 {
        return Err(Error::InvalidConfig {
            violations: vec!["horizon must be at least 1".into()],
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for k in 0..horizon {
        let next = model.step(&states[k]);
        debug_assert_eq!(next.len(), n, "step() broke its dimension contract");
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowUp {
                context: "state propagation".into(),
                step: k + 1,
            });
        }
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Evaluate the output map along a trajectory, optionally adding i.i.d.
/// Gaussian measurement noise of standard deviation `noise_sd`.
///
/// `noise_sd = 0` yields the exact outputs; equal seeds yield identical
/// noise. The noise is drawn sample-major (time index outer, output
/// component inner).
pub fn observe_trajectory(
    model: &dyn SystemModel,
    traj: &Trajectory,
    noise_sd: f64,
    seed: u64,
) -> Result<OutputSequence> {
    if traj.state_dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "trajectory state",
            expected: model.state_dim(),
            got: traj.state_dim(),
        });
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::InvalidConfig {
            violations: vec![format!(
                "noise standard deviation must be finite and nonnegative, got {noise_sd}"
            )],
        });
    }
    let mut outputs: Vec<DVector<f64>> = traj.states().iter().map(|x| model.observe(x)).collect();
    let noise = if noise_sd > 0.0 {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, noise_sd).expect("validated above");
        for y in &mut outputs {
            for v in y.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        Some(NoiseRecord { seed, sd: noise_sd })
    } else {
        None
    };
    OutputSequence::from_outputs(outputs, noise)
}

/// A system defined by closures; convenient for tests and ad-hoc models.
pub struct ClosureSystem<F, H>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
    H: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    pub n: usize,
    pub m: usize,
    pub step_fn: F,
    pub observe_fn: H,
}

impl<F, H> SystemModel for ClosureSystem<F, H>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
    H: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.step_fn)(x)
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.observe_fn)(x)
    }
}

/// Identity-observation closure system used in several tests.
pub fn identity_system(n: usize) -> impl SystemModel {
    ClosureSystem {
        n,
        m: n,
        step_fn: |x: &DVector<f64>| x.clone(),
        observe_fn: |x: &DVector<f64>| x.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn identity_map_is_a_fixed_point() {
        let model = identity_system(3);
        let v = dvector![0.3, -1.5, 2.0];
        let traj = propagate(&model, &v, 3).unwrap();
        assert_eq!(traj.horizon(), 3);
        for k in 0..=3 {
            assert_eq!(traj.state(k), &v);
        }
    }

    #[test]
    fn scalar_doubling_matches_closed_form() {
        let model = ClosureSystem {
            n: 1,
            m: 1,
            step_fn: |x: &DVector<f64>| 2.0 * x,
            observe_fn: |x: &DVector<f64>| x.clone(),
        };
        let traj = propagate(&model, &dvector![1.0], 3).unwrap();
        let got: Vec<f64> = traj.states().iter().map(|s| s[0]).collect();
        assert_eq!(got, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn propagate_rejects_wrong_dimension() {
        let model = identity_system(3);
        let err = propagate(&model, &dvector![1.0, 2.0], 2).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn propagate_rejects_zero_horizon() {
        let model = identity_system(2);
        let err = propagate(&model, &dvector![1.0, 2.0], 0).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { .. }));
    }

    #[test]
    fn propagate_reports_blowup_step() {
        let model = ClosureSystem {
            n: 1,
            m: 1,
            step_fn: |x: &DVector<f64>| x * x[0] * 1e200,
            observe_fn: |x: &DVector<f64>| x.clone(),
        };
        let err = propagate(&model, &dvector![1.0], 5).unwrap_err();
        match err {
            Error::NumericalBlowUp { step, .. } => assert_eq!(step, 2),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_gives_exact_outputs() {
        let model = ClosureSystem {
            n: 2,
            m: 1,
            step_fn: |x: &DVector<f64>| 0.5 * x,
            observe_fn: |x: &DVector<f64>| dvector![x[0] + x[1]],
        };
        let traj = propagate(&model, &dvector![1.0, 3.0], 4).unwrap();
        let out = observe_trajectory(&model, &traj, 0.0, 99).unwrap();
        for (y, x) in out.outputs().iter().zip(traj.states()) {
            assert_eq!(y[0], x[0] + x[1]);
        }
        assert!(out.noise().is_none());
    }

    #[test]
    fn equal_seeds_give_identical_noise() {
        let model = identity_system(4);
        let traj = propagate(&model, &dvector![0.1, 0.2, 0.3, 0.4], 9).unwrap();
        let a = observe_trajectory(&model, &traj, 0.028, 7).unwrap();
        let b = observe_trajectory(&model, &traj, 0.028, 7).unwrap();
        let c = observe_trajectory(&model, &traj, 0.028, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_noise_sd_is_rejected() {
        let model = identity_system(2);
        let traj = propagate(&model, &dvector![1.0, 1.0], 1).unwrap();
        assert!(observe_trajectory(&model, &traj, -0.1, 0).is_err());
    }

    /// Mean l2 norm of the measurement noise over many seeds. With
    /// m(K+1) = 40 draws at sd 0.028 the mean concentrates near 0.1771,
    /// with 80 draws near 0.2504.
    #[test]
    fn noise_norm_concentrates() {
        let model = identity_system(4);
        let zero = DVector::zeros(4);
        for (horizon, lo, hi) in [(9usize, 0.17, 0.185), (19usize, 0.245, 0.256)] {
            let traj = propagate(&model, &zero, horizon).unwrap();
            let mut total = 0.0;
            let seeds = 1000u64;
            for seed in 0..seeds {
                let out = observe_trajectory(&model, &traj, 0.028, seed).unwrap();
                let sq: f64 = out.outputs().iter().map(|y| y.norm_squared()).sum();
                total += sq.sqrt();
            }
            let mean = total / seeds as f64;
            assert!(
                mean > lo && mean < hi,
                "mean noise norm {mean} outside [{lo}, {hi}] for horizon {horizon}"
            );
        }
    }

    proptest! {
        /// Re-applying `step` to each stored state reproduces its successor
        /// exactly.
        #[test]
        fn repropagation_reproduces_states(
            x0 in proptest::collection::vec(-5.0f64..5.0, 3),
            horizon in 1usize..20,
        ) {
            let model = ClosureSystem {
                n: 3,
                m: 3,
                step_fn: |x: &DVector<f64>| {
                    dvector![0.9 * x[0] + 0.1 * x[1], x[1] * 0.5 - x[2] * 0.25, x[2] * 0.8 + 0.05 * x[0]]
                },
                observe_fn: |x: &DVector<f64>| x.clone(),
            };
            let traj = propagate(&model, &DVector::from_vec(x0), horizon).unwrap();
            for k in 0..horizon {
                prop_assert_eq!(&model.step(traj.state(k)), traj.state(k + 1));
            }
        }
    }
}
