//! Empirical observability Gramians and the unobservability index of a
//! targeted state variable.
//!
//! Around a nominal trajectory, `2n` auxiliary trajectories started at
//! `x(0) +- delta e_i` yield central-difference output sensitivities. Their
//! accumulation `G = sum_k Dy(k)^T Dy(k)` is the (empirical) observability
//! Gramian and `F` is the sensitivity row of the targeted final-state
//! component. The unobservability index is the maximum of `|F dx0|` over
//! perturbations of unit `G`-norm; because `F^T F` has rank one it has the
//! closed form `sqrt(F G^+ F^T)` with a truncated pseudo-inverse handling
//! near-singular `G`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, streams};

/// Share of the sensitivity row living in truncated eigendirections beyond
/// which the target is reported as practically unobservable (infinite
/// index). At 0.9 the sentinel fires only when essentially the whole
/// sensitivity mass is unobservable at the horizon; targets that are merely
/// hard to observe keep their finite (large) index.
pub const NULL_LEAK_REL_TOL: f64 = 0.9;

/// Parameters of the empirical Gramian computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GramianConfig {
    /// Central-difference perturbation size.
    pub delta: f64,
    /// Measurement horizon `K`; `K + 1` output samples enter the Gramian.
    pub horizon: usize,
    /// Targeted state variable, 1-based.
    pub target: usize,
    /// Relative eigenvalue cutoff of the truncated pseudo-inverse.
    pub rank_tol: f64,
}

impl Default for GramianConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            horizon: 9,
            target: 25,
            rank_tol: 1e-11,
        }
    }
}

impl GramianConfig {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let mut violations = Vec::new();
        if !(self.delta.is_finite() && self.delta > 0.0) {
            violations.push(format!("delta must be finite and > 0, got {}", self.delta));
        }
        if self.horizon < 1 {
            violations.push(format!("horizon K must be >= 1, got {}", self.horizon));
        }
        if self.target < 1 || self.target > state_dim {
            violations.push(format!(
                "target must be in 1..={state_dim}, got {}",
                self.target
            ));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            violations.push(format!(
                "rank_tol must be in (0, 1), got {}",
                self.rank_tol
            ));
        }
        Error::check_violations(violations)
    }
}

/// The `(G, F)` pair for one targeted variable, with the nominal trajectory
/// it was computed around.
#[derive(Clone, Debug)]
pub struct EmpiricalGramian {
    /// `n x n` observability Gramian.
    pub gramian: DMatrix<f64>,
    /// Length-`n` sensitivity of the targeted final-state component with
    /// respect to the initial state.
    pub sensitivity: DVector<f64>,
    /// The unperturbed trajectory.
    pub base_trajectory: Trajectory,
}

/// Result of the index computation, with pseudo-inverse diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservabilityReport {
    /// The unobservability index; `f64::INFINITY` when the target is
    /// practically unobservable.
    pub index: f64,
    /// Smallest eigenvalue of the (symmetrized) Gramian.
    pub min_eig_gramian: f64,
    /// Largest eigenvalue of the (symmetrized) Gramian.
    pub max_eig_gramian: f64,
    /// Worst-case initial perturbation of unit `G`-norm; `None` when the
    /// index is infinite or zero.
    pub maximizer: Option<Vec<f64>>,
    /// Number of eigenvalues above the truncation cutoff.
    pub effective_rank: usize,
    /// Absolute eigenvalue cutoff that was applied.
    pub cutoff: f64,
    /// Norm of the sensitivity component in truncated eigendirections,
    /// relative to the sensitivity norm.
    pub null_leak: f64,
    pub target: usize,
    pub horizon: usize,
}

/// Compute the empirical `(G, F)` pair around the trajectory started at
/// `x0` by central differences with `2n` perturbed propagations.
///
/// Fails if any perturbed trajectory blows up, naming the perturbation.
pub fn empirical_pair(
    model: &dyn SystemModel,
    x0: &DVector<f64>,
    cfg: &GramianConfig,
) -> Result<EmpiricalGramian> {
    let n = model.state_dim();
    let m = model.output_dim();
    cfg.validate(n)?;
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    let horizon = cfg.horizon;
    let base_trajectory = propagate(model, x0, horizon)?;

    struct Column {
        /// `Delta^i y(k)` for `k = 0..=K`.
        output_sens: Vec<DVector<f64>>,
        /// `Delta^i x_target(K)`.
        target_sens: f64,
    }

    let columns: Vec<Column> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Column> {
            let mut delta_vec = DVector::zeros(n);
            delta_vec[i] = cfg.delta;
            let plus = propagate(model, &(x0 + &delta_vec), horizon).map_err(|e| wrap_blowup(e, i, '+'))?;
            let minus =
                propagate(model, &(x0 - &delta_vec), horizon).map_err(|e| wrap_blowup(e, i, '-'))?;
            let inv = 1.0 / (2.0 * cfg.delta);
            let output_sens = (0..=horizon)
                .map(|k| (model.observe(plus.state(k)) - model.observe(minus.state(k))) * inv)
                .collect();
            let target_sens =
                (plus.state(horizon)[cfg.target - 1] - minus.state(horizon)[cfg.target - 1]) * inv;
            Ok(Column {
                output_sens,
                target_sens,
            })
        })
        .collect::<Result<_>>()?;

    // Fixed accumulation order (k outer) so results do not depend on the
    // parallel schedule above.
    let mut gramian = DMatrix::zeros(n, n);
    let mut dy = DMatrix::zeros(m, n);
    for k in 0..=horizon {
        for (i, col) in columns.iter().enumerate() {
            dy.set_column(i, &col.output_sens[k]);
        }
        gramian.gemm_tr(1.0, &dy, &dy, 1.0);
    }
    let sensitivity = DVector::from_iterator(n, columns.iter().map(|c| c.target_sens));

    Ok(EmpiricalGramian {
        gramian,
        sensitivity,
        base_trajectory,
    })
}

fn wrap_blowup(err: Error, i: usize, sign: char) -> Error {
    match err {
        Error::NumericalBlowUp { step, .. } => Error::NumericalBlowUp {
            context: format!("perturbation {sign}delta*e_{}", i + 1),
            step,
        },
        other => other,
    }
}

/// Exact `(G, F)` of a linear system `x(k+1) = A x(k)`, `y = H x`:
/// `G = sum_{k=0}^{K} (A^T)^k H^T H A^k` and `F = e_target^T A^K`.
pub fn exact_linear_pair(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    horizon: usize,
    target: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "state matrix (must be square)",
            expected: n,
            got: a.ncols(),
        });
    }
    if h.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "output matrix columns",
            expected: n,
            got: h.ncols(),
        });
    }
    if target < 1 || target > n {
        return Err(Error::InvalidConfig {
            violations: vec![format!("target must be in 1..={n}, got {target}")],
        });
    }
    let mut gramian = DMatrix::zeros(n, n);
    let mut a_pow = DMatrix::identity(n, n);
    for k in 0..=horizon {
        let ha = h * &a_pow;
        gramian.gemm_tr(1.0, &ha, &ha, 1.0);
        if k < horizon {
            a_pow = a * a_pow;
        }
    }
    let sensitivity = a_pow.row(target - 1).transpose();
    Ok((gramian, sensitivity))
}

/// Solve the constrained quadratic maximization for the targeted variable:
/// the index is `sqrt(F G_tau^+ F^T)` with eigenvalues below
/// `rank_tol * lambda_max` truncated. If the sensitivity leaks into the
/// truncated subspace beyond [`NULL_LEAK_REL_TOL`], the index is reported
/// as infinite ("practically unobservable"). The index is invariant to the
/// output-perturbation budget, which only scales downstream error bounds.
pub fn unobservability_index(
    pair: &EmpiricalGramian,
    cfg: &GramianConfig,
) -> Result<ObservabilityReport> {
    index_from_pair(&pair.gramian, &pair.sensitivity, cfg)
}

/// Index computation on an explicit `(G, F)` pair (empirical or exact).
pub fn index_from_pair(
    gramian: &DMatrix<f64>,
    sensitivity: &DVector<f64>,
    cfg: &GramianConfig,
) -> Result<ObservabilityReport> {
    let n = gramian.nrows();
    if gramian.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "gramian (must be square)",
            expected: n,
            got: gramian.ncols(),
        });
    }
    if sensitivity.len() != n {
        return Err(Error::DimensionMismatch {
            what: "sensitivity row",
            expected: n,
            got: sensitivity.len(),
        });
    }
    if !gramian.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "gramian" });
    }
    if !sensitivity.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput {
            what: "sensitivity row",
        });
    }

    // Purge rounding asymmetry before the self-adjoint decomposition.
    let sym = (gramian + gramian.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let max_eig = eig.eigenvalues.max();
    let cutoff = cfg.rank_tol * max_eig.max(0.0);

    // Coefficients of the sensitivity row in the eigenbasis.
    let coeffs = eig.eigenvectors.tr_mul(sensitivity);
    let f_norm = sensitivity.norm();

    let mut index_sq = 0.0;
    let mut leak_sq = 0.0;
    let mut effective_rank = 0;
    for (lambda, c) in eig.eigenvalues.iter().zip(coeffs.iter()) {
        if *lambda > cutoff {
            effective_rank += 1;
            index_sq += c * c / lambda;
        } else {
            leak_sq += c * c;
        }
    }
    let null_leak = if f_norm > 0.0 {
        leak_sq.sqrt() / f_norm
    } else {
        0.0
    };

    let (index, maximizer) = if f_norm == 0.0 {
        (0.0, None)
    } else if null_leak > NULL_LEAK_REL_TOL {
        (f64::INFINITY, None)
    } else {
        let index = index_sq.sqrt();
        // Worst-case direction G_tau^+ F^T, scaled to unit G-norm.
        let mut dir = DVector::zeros(n);
        for (j, (lambda, c)) in eig.eigenvalues.iter().zip(coeffs.iter()).enumerate() {
            if *lambda > cutoff {
                dir += (c / lambda) * eig.eigenvectors.column(j);
            }
        }
        if index > 0.0 {
            dir /= index;
            (index, Some(dir.iter().copied().collect()))
        } else {
            (0.0, None)
        }
    };

    Ok(ObservabilityReport {
        index,
        min_eig_gramian: min_eig,
        max_eig_gramian: max_eig,
        maximizer,
        effective_rank,
        cutoff,
        null_leak,
        target: cfg.target,
        horizon: cfg.horizon,
    })
}

/// The worst-error heuristic: `index * noise_sd * sqrt(m (K + 1))`.
///
/// All inputs are expected nonnegative; the result is the product as-is.
pub fn worst_case_error_bound(index: f64, noise_sd: f64, output_dim: usize, horizon: usize) -> f64 {
    index * noise_sd * ((output_dim * (horizon + 1)) as f64).sqrt()
}

/// Diagnostic for the central-difference step: the index recomputed with
/// `delta / 2` should agree to a percent or so on well-behaved problems.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaRobustness {
    pub index: f64,
    pub index_halved_delta: f64,
    pub rel_gap: f64,
}

pub fn delta_robustness_check(
    model: &dyn SystemModel,
    x0: &DVector<f64>,
    cfg: &GramianConfig,
) -> Result<DeltaRobustness> {
    let full = unobservability_index(&empirical_pair(model, x0, cfg)?, cfg)?;
    let halved_cfg = GramianConfig {
        delta: cfg.delta / 2.0,
        ..cfg.clone()
    };
    let halved = unobservability_index(&empirical_pair(model, x0, &halved_cfg)?, &halved_cfg)?;
    let rel_gap = if full.index.is_finite() && halved.index.is_finite() && full.index > 0.0 {
        (full.index - halved.index).abs() / full.index
    } else {
        f64::NAN
    };
    Ok(DeltaRobustness {
        index: full.index,
        index_halved_delta: halved.index,
        rel_gap,
    })
}

/// One row of a Gramian survey.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurveySample {
    pub sample_id: usize,
    pub seed: u64,
    pub min_eig: f64,
    pub index: f64,
}

/// A per-sample failure; the survey continues past it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurveyFailure {
    pub sample_id: usize,
    pub seed: u64,
    pub message: String,
}

/// Results of a randomized Gramian survey.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Survey {
    pub samples: Vec<SurveySample>,
    pub failures: Vec<SurveyFailure>,
}

impl Survey {
    /// Mean of the finite indexes (the "averaged observability index").
    pub fn mean_finite_index(&self) -> Option<f64> {
        let finite: Vec<f64> = self
            .samples
            .iter()
            .map(|s| s.index)
            .filter(|v| v.is_finite())
            .collect();
        if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        }
    }

    pub fn median_index(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut values: Vec<f64> = self.samples.iter().map(|s| s.index).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("index is never NaN"));
        Some(values[values.len() / 2])
    }
}

/// Compute `(min eigenvalue of G, index)` at `count` sampled initial states.
///
/// Per-sample seeds are derived from `master_seed`; the sampler maps a seed
/// to an initial state. Failed samples are recorded with their seed and the
/// survey continues. Results are identical regardless of thread schedule.
pub fn gramian_survey<S>(
    model: &dyn SystemModel,
    sampler: S,
    count: usize,
    cfg: &GramianConfig,
    master_seed: u64,
) -> Survey
where
    S: Fn(u64) -> Result<DVector<f64>> + Sync,
{
    let rows: Vec<(usize, u64, std::result::Result<SurveySample, String>)> = (0..count)
        .into_par_iter()
        .map(|sample_id| {
            let seed = derive_seed(master_seed, streams::SURVEY, sample_id as u64);
            let outcome = sampler(seed)
                .and_then(|x0| empirical_pair(model, &x0, cfg))
                .and_then(|pair| unobservability_index(&pair, cfg))
                .map(|report| SurveySample {
                    sample_id,
                    seed,
                    min_eig: report.min_eig_gramian,
                    index: report.index,
                })
                .map_err(|e| e.to_string());
            (sample_id, seed, outcome)
        })
        .collect();

    let mut survey = Survey::default();
    for (sample_id, seed, outcome) in rows {
        match outcome {
            Ok(sample) => survey.samples.push(sample),
            Err(message) => survey.failures.push(SurveyFailure {
                sample_id,
                seed,
                message,
            }),
        }
    }
    survey
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::{make_system, sample_fourier_initial, BurgersConfig, SensorLayout};
    use crate::dynamics::{identity_system, ClosureSystem, LinearSystem};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn random_linear(n: usize, m: usize, seed: u64, spectral_scale: f64) -> LinearSystem {
        let mut rng = crate::rng::rng_from_seed(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng) * spectral_scale);
        let h = DMatrix::from_fn(m, n, |_, _| normal.sample(&mut rng));
        LinearSystem::new(a, h).unwrap()
    }

    #[test]
    fn identity_model_gives_scaled_identity_gramian() {
        // A = I, H = I, n = 2, K = 1: G = 2 I, F = e_target.
        let model = identity_system(2);
        let cfg = GramianConfig {
            delta: 1e-3,
            horizon: 1,
            target: 2,
            rank_tol: 1e-12,
        };
        let pair = empirical_pair(&model, &nalgebra::dvector![0.3, -0.7], &cfg).unwrap();
        assert!((&pair.gramian - 2.0 * DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!((&pair.sensitivity - nalgebra::dvector![0.0, 1.0]).amax() < 1e-12);
    }

    #[test]
    fn empirical_matches_exact_on_random_linear_systems() {
        for seed in 0..25u64 {
            let mut rng = crate::rng::rng_from_seed(seed.wrapping_add(1000));
            let n = rng.random_range(2..=6);
            let m = rng.random_range(1..=3);
            let horizon = rng.random_range(2..=8);
            let target = rng.random_range(1..=n);
            let system = random_linear(n, m, seed, 0.6);
            let cfg = GramianConfig {
                delta: 1e-3,
                horizon,
                target,
                rank_tol: 1e-12,
            };
            let x0 = DVector::from_fn(n, |i, _| (i as f64 - 1.0) * 0.4);
            let pair = empirical_pair(&system, &x0, &cfg).unwrap();
            let (g_exact, f_exact) =
                exact_linear_pair(system.state_matrix(), system.output_matrix(), horizon, target)
                    .unwrap();
            let g_err = (&pair.gramian - &g_exact).norm() / g_exact.norm();
            let f_err = (&pair.sensitivity - &f_exact).norm() / f_exact.norm().max(1e-30);
            assert!(g_err < 1e-8, "seed {seed}: G relative error {g_err}");
            assert!(f_err < 1e-8, "seed {seed}: F relative error {f_err}");
        }
    }

    #[test]
    fn closed_form_index_on_diagonal_gramian() {
        // G = 2 I (n = 2), F = (1, 0): index = sqrt(F G^-1 F^T) = 1/sqrt(2).
        let g = 2.0 * DMatrix::<f64>::identity(2, 2);
        let f = nalgebra::dvector![1.0, 0.0];
        let cfg = GramianConfig {
            horizon: 1,
            target: 1,
            ..GramianConfig::default()
        };
        let report = index_from_pair(&g, &f, &cfg).unwrap();
        assert!((report.index - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.effective_rank, 2);

        // Maximizer has unit G-norm and attains the index.
        let dir = DVector::from_vec(report.maximizer.clone().unwrap());
        let gnorm = (dir.transpose() * &g * &dir)[(0, 0)];
        assert!((gnorm - 1.0).abs() < 1e-8);
        assert!((f.dot(&dir).abs() - report.index).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_gramian_separates_targets() {
        // A = I, H = (1 0), K = 1: G = 2 diag(1, 0).
        let a = DMatrix::<f64>::identity(2, 2);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let (g, f1) = exact_linear_pair(&a, &h, 1, 1).unwrap();
        let (_, f2) = exact_linear_pair(&a, &h, 1, 2).unwrap();
        let cfg1 = GramianConfig {
            horizon: 1,
            target: 1,
            ..GramianConfig::default()
        };
        let report1 = index_from_pair(&g, &f1, &cfg1).unwrap();
        assert!((report1.index - 0.5f64.sqrt()).abs() < 1e-12);

        let cfg2 = GramianConfig {
            horizon: 1,
            target: 2,
            ..GramianConfig::default()
        };
        let report2 = index_from_pair(&g, &f2, &cfg2).unwrap();
        assert!(report2.index.is_infinite());
        assert!(report2.maximizer.is_none());
        assert!(report2.null_leak > NULL_LEAK_REL_TOL);
    }

    #[test]
    fn zero_sensitivity_gives_zero_index() {
        let g = DMatrix::<f64>::identity(3, 3);
        let f = DVector::zeros(3);
        let cfg = GramianConfig {
            horizon: 1,
            target: 1,
            ..GramianConfig::default()
        };
        let report = index_from_pair(&g, &f, &cfg).unwrap();
        assert_eq!(report.index, 0.0);
    }

    #[test]
    fn non_finite_gramian_is_rejected() {
        let mut g = DMatrix::<f64>::identity(2, 2);
        g[(0, 1)] = f64::NAN;
        let cfg = GramianConfig {
            horizon: 1,
            target: 1,
            ..GramianConfig::default()
        };
        assert!(index_from_pair(&g, &nalgebra::dvector![1.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn worst_case_bound_reproduces_reference_values() {
        // 4 sensors, 10 samples, sd 0.028, index 4.3702.
        let b10 = worst_case_error_bound(4.3702, 0.028, 4, 9);
        assert!((b10 - 0.7740).abs() / 0.7740 < 5e-4, "got {b10}");
        // 4 sensors, 20 samples, index 0.7940.
        let b20 = worst_case_error_bound(0.7940, 0.028, 4, 19);
        assert!((b20 - 0.1988).abs() / 0.1988 < 5e-4, "got {b20}");
        assert_eq!(worst_case_error_bound(0.0, 0.028, 4, 9), 0.0);
    }

    #[test]
    fn gramian_is_symmetric_psd_on_burgers() {
        let config = BurgersConfig::default();
        let system = make_system(config.clone(), SensorLayout::case1()).unwrap();
        let x0 = sample_fourier_initial(&config, 3, 0.3, 11).unwrap();
        let cfg = GramianConfig::default();
        let pair = empirical_pair(&system, &x0, &cfg).unwrap();
        let asym = (&pair.gramian - pair.gramian.transpose()).amax();
        assert!(asym <= 1e-12 * pair.gramian.amax());
        let report = unobservability_index(&pair, &cfg).unwrap();
        assert!(report.min_eig_gramian >= -1e-10 * report.max_eig_gramian);
    }

    #[test]
    fn delta_halving_agrees_on_burgers() {
        let config = BurgersConfig::default();
        let system = make_system(config.clone(), SensorLayout::case1()).unwrap();
        let x0 = sample_fourier_initial(&config, 3, 0.3, 3).unwrap();
        let check = delta_robustness_check(&system, &x0, &GramianConfig::default()).unwrap();
        assert!(
            check.rel_gap < 0.01,
            "delta robustness gap {} (index {} vs {})",
            check.rel_gap,
            check.index,
            check.index_halved_delta
        );
    }

    #[test]
    fn survey_of_one_reduces_to_empirical_pair() {
        let config = BurgersConfig::default();
        let system = make_system(config.clone(), SensorLayout::case1()).unwrap();
        let cfg = GramianConfig::default();
        let master = 99;
        let survey = gramian_survey(
            &system,
            |seed| sample_fourier_initial(&config, 3, 0.3, seed),
            1,
            &cfg,
            master,
        );
        assert_eq!(survey.samples.len(), 1);
        assert!(survey.failures.is_empty());

        let seed = derive_seed(master, streams::SURVEY, 0);
        let x0 = sample_fourier_initial(&config, 3, 0.3, seed).unwrap();
        let report =
            unobservability_index(&empirical_pair(&system, &x0, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(survey.samples[0].index, report.index);
        assert_eq!(survey.samples[0].min_eig, report.min_eig_gramian);
    }

    #[test]
    fn linear_survey_is_state_independent() {
        let system = random_linear(4, 2, 5, 0.5);
        let cfg = GramianConfig {
            horizon: 5,
            target: 2,
            ..GramianConfig::default()
        };
        let survey = gramian_survey(
            &system,
            |seed| {
                let mut rng = crate::rng::rng_from_seed(seed);
                Ok(DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5))
            },
            8,
            &cfg,
            7,
        );
        assert_eq!(survey.samples.len(), 8);
        let first = survey.samples[0].index;
        for s in &survey.samples {
            assert!((s.index - first).abs() <= 1e-8 * first.abs());
        }
    }

    #[test]
    fn survey_records_failures_and_continues() {
        let model = ClosureSystem {
            n: 1,
            m: 1,
            step_fn: |x: &DVector<f64>| x * 1e120,
            observe_fn: |x: &DVector<f64>| x.clone(),
        };
        let cfg = GramianConfig {
            horizon: 4,
            target: 1,
            ..GramianConfig::default()
        };
        let survey = gramian_survey(
            &model,
            |_seed| Ok(nalgebra::dvector![1.0]),
            3,
            &cfg,
            0,
        );
        assert_eq!(survey.samples.len(), 0);
        assert_eq!(survey.failures.len(), 3);
        for f in &survey.failures {
            assert!(f.message.contains("blow-up"), "message: {}", f.message);
        }
    }

    #[test]
    fn blowup_reports_perturbation() {
        let model = ClosureSystem {
            n: 2,
            m: 1,
            // Diverges only when pushed in the second coordinate.
            step_fn: |x: &DVector<f64>| {
                nalgebra::dvector![x[0], if x[1].abs() > 0.5 { x[1] * 1e160 } else { x[1] }]
            },
            observe_fn: |x: &DVector<f64>| nalgebra::dvector![x[0]],
        };
        let cfg = GramianConfig {
            delta: 1.0,
            horizon: 3,
            target: 1,
            rank_tol: 1e-12,
        };
        let err = empirical_pair(&model, &nalgebra::dvector![0.0, 0.0], &cfg).unwrap_err();
        match err {
            Error::NumericalBlowUp { context, .. } => {
                assert!(context.contains("e_2"), "context: {context}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
