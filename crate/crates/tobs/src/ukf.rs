//! Unscented Kalman Filter baseline.
//!
//! Standard scaled unscented transform: `2n + 1` sigma points from the
//! Cholesky factor of the covariance (with an eigenvalue-floor fallback,
//! since weak observability makes near-singular covariances routine here),
//! propagation through the system map, additive process noise, regenerated
//! sigma points through the output map, and the usual cross-covariance gain.
//! The covariance is re-symmetrized after every step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{OutputSequence, SystemModel, Trajectory};
use crate::error::{Error, Result};

/// Relative tolerance below which a negative covariance eigenvalue is
/// repaired by flooring instead of reported as a failure.
const PSD_REL_TOL: f64 = 1e-8;
/// Relative eigenvalue floor used when the Cholesky factorization fails.
const EIG_FLOOR_REL: f64 = 1e-12;

/// How the initial estimate is perturbed away from the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitOffset {
    /// No perturbation; the filter starts at the truth.
    None,
    /// Offset drawn from the truncated Fourier sampler with this sigma.
    Fourier { sigma: f64 },
    /// Explicit offset vector.
    Explicit { values: Vec<f64> },
}

/// Filter parameters. The sigma-point spread defaults are the common
/// scaled-UT choices; the noise scales are exposed because the problem
/// leaves them free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Secondary sigma-point scaling parameter.
    pub kappa_sigma: f64,
    /// Initial covariance `P0 = p0_scale * I`; `None` derives the scale
    /// from the initial offset via [`UkfConfig::p0_from_offset`].
    pub p0_scale: Option<f64>,
    /// Process noise `Q = q_scale * I`.
    pub q_scale: f64,
    /// Measurement noise standard deviation; `R = r_sd^2 * I`.
    pub r_sd: f64,
    pub init_offset: InitOffset,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa_sigma: 0.0,
            p0_scale: None,
            q_scale: 1e-8,
            r_sd: 0.028,
            init_offset: InitOffset::Fourier { sigma: 0.3 },
        }
    }
}

impl UkfConfig {
    /// `P0` scale derived from an initial offset: `(2 |offset|)^2`, a
    /// conservative prior whose standard deviation is twice the offset
    /// magnitude. Weakly observable targets leave the filter overconfident
    /// with a tighter prior.
    pub fn p0_from_offset(offset: &DVector<f64>) -> f64 {
        4.0 * offset.norm_squared()
    }

    /// Concrete `P0` scale: the explicit value if set, otherwise derived
    /// from the offset.
    pub fn resolve_p0(&self, offset: &DVector<f64>) -> f64 {
        self.p0_scale.unwrap_or_else(|| Self::p0_from_offset(offset))
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            violations.push(format!("alpha must be finite and > 0, got {}", self.alpha));
        }
        if !self.beta.is_finite() {
            violations.push(format!("beta must be finite, got {}", self.beta));
        }
        if !(self.kappa_sigma.is_finite() && self.kappa_sigma >= 0.0) {
            violations.push(format!(
                "kappa_sigma must be finite and >= 0, got {}",
                self.kappa_sigma
            ));
        }
        if let Some(p0) = self.p0_scale {
            if !(p0.is_finite() && p0 > 0.0) {
                violations.push(format!("p0_scale must be finite and > 0, got {p0}"));
            }
        }
        if !(self.q_scale.is_finite() && self.q_scale >= 0.0) {
            violations.push(format!(
                "q_scale must be finite and >= 0, got {}",
                self.q_scale
            ));
        }
        if !(self.r_sd.is_finite() && self.r_sd > 0.0) {
            violations.push(format!("r_sd must be finite and > 0, got {}", self.r_sd));
        }
        if let InitOffset::Fourier { sigma } = self.init_offset {
            if !(sigma.is_finite() && sigma > 0.0) {
                violations.push(format!(
                    "init_offset sigma must be finite and > 0, got {sigma}"
                ));
            }
        }
        Error::check_violations(violations)
    }
}

/// Per-step filter output.
#[derive(Clone, Debug)]
pub struct UkfRun {
    /// State means `xhat(k)`, `k = 0..=K`.
    pub estimates: Vec<DVector<f64>>,
    /// Covariances `P(k)`.
    pub covariances: Vec<DMatrix<f64>>,
}

impl UkfRun {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

struct UtWeights {
    gamma: f64,
    wc0: f64,
    wi: f64,
}

impl UtWeights {
    /// Central mean weight `lambda / (n + lambda)`; implicit in the
    /// recentered mean accumulation, explicit for the weight-sum checks.
    #[cfg(test)]
    fn wm0(&self, n: usize) -> f64 {
        let scale = self.gamma * self.gamma;
        (scale - n as f64) / scale
    }
}

fn ut_weights(n: usize, cfg: &UkfConfig) -> UtWeights {
    let nf = n as f64;
    let lambda = cfg.alpha * cfg.alpha * (nf + cfg.kappa_sigma) - nf;
    let scale = nf + lambda;
    UtWeights {
        gamma: scale.sqrt(),
        wc0: lambda / scale + (1.0 - cfg.alpha * cfg.alpha + cfg.beta),
        wi: 0.5 / scale,
    }
}

/// Square root `S` with `S S^T = P` for sigma-point generation: Cholesky of
/// the symmetrized matrix, falling back to an eigenvalue-floored symmetric
/// factor when the covariance has drifted to the edge of the PSD cone.
///
/// `ref_scale` anchors the failure tolerance; a covariance that has
/// legitimately collapsed to near zero would otherwise flag its own
/// rounding noise as indefinite.
fn covariance_sqrt(p: &DMatrix<f64>, ref_scale: f64, step: usize) -> Result<DMatrix<f64>> {
    let sym = (p + p.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.unpack());
    }
    let n = sym.nrows();
    let trace = sym.trace();
    let scale = (trace / n as f64).abs().max(f64::MIN_POSITIVE);
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -PSD_REL_TOL * scale.max(ref_scale) {
        return Err(Error::CovarianceNotPsd { step, min_eig });
    }
    let floor = EIG_FLOOR_REL * scale;
    let mut sqrt = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let clamped = lambda.max(floor).sqrt();
        sqrt.column_mut(j).scale_mut(clamped);
    }
    Ok(sqrt)
}

fn sigma_points(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    weights: &UtWeights,
    ref_scale: f64,
    step: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = x.len();
    let sqrt = covariance_sqrt(p, ref_scale, step)?;
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(x.clone());
    for i in 0..n {
        let col = weights.gamma * sqrt.column(i);
        points.push(x + &col);
        points.push(x - &col);
    }
    Ok(points)
}

/// Weighted mean of transformed sigma points, accumulated relative to the
/// central point so the huge scaled-UT weights cancel pairwise.
fn ut_mean(points: &[DVector<f64>], weights: &UtWeights) -> DVector<f64> {
    let n = (points.len() - 1) / 2;
    let mut correction = DVector::zeros(points[0].len());
    for i in 0..n {
        correction += (&points[1 + 2 * i] - &points[0]) + (&points[2 + 2 * i] - &points[0]);
    }
    &points[0] + weights.wi * correction
}

fn ut_cov(points: &[DVector<f64>], mean: &DVector<f64>, weights: &UtWeights) -> DMatrix<f64> {
    let dim = mean.len();
    let mut cov = DMatrix::zeros(dim, dim);
    let d0 = &points[0] - mean;
    cov.ger(weights.wc0, &d0, &d0, 1.0);
    for p in &points[1..] {
        let d = p - mean;
        cov.ger(weights.wi, &d, &d, 1.0);
    }
    cov
}

fn ut_cross(
    xs: &[DVector<f64>],
    x_mean: &DVector<f64>,
    ys: &[DVector<f64>],
    y_mean: &DVector<f64>,
    weights: &UtWeights,
) -> DMatrix<f64> {
    let mut cross = DMatrix::zeros(x_mean.len(), y_mean.len());
    let dx0 = &xs[0] - x_mean;
    let dy0 = &ys[0] - y_mean;
    cross.ger(weights.wc0, &dx0, &dy0, 1.0);
    for (x, y) in xs[1..].iter().zip(&ys[1..]) {
        cross.ger(weights.wi, &(x - x_mean), &(y - y_mean), 1.0);
    }
    cross
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Run the filter over `measurements`, starting from the given initial
/// estimate. The reference trajectory is used only to validate dimensions;
/// the recursion sees measurements alone.
pub fn ukf_run(
    model: &dyn SystemModel,
    truth: &Trajectory,
    measurements: &OutputSequence,
    cfg: &UkfConfig,
    xhat0: &DVector<f64>,
) -> Result<UkfRun> {
    cfg.validate()?;
    let n = model.state_dim();
    let m = model.output_dim();
    if xhat0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial estimate",
            expected: n,
            got: xhat0.len(),
        });
    }
    if truth.state_dim() != n {
        return Err(Error::DimensionMismatch {
            what: "reference trajectory state",
            expected: n,
            got: truth.state_dim(),
        });
    }
    if measurements.output_dim() != m {
        return Err(Error::DimensionMismatch {
            what: "measurement",
            expected: m,
            got: measurements.output_dim(),
        });
    }
    if measurements.horizon() < 1 {
        return Err(Error::InvalidConfig {
            violations: vec!["at least two measurement samples are required".into()],
        });
    }
    if truth.horizon() < measurements.horizon() {
        return Err(Error::DimensionMismatch {
            what: "reference trajectory length",
            expected: measurements.horizon() + 1,
            got: truth.horizon() + 1,
        });
    }

    let p0_scale = cfg.p0_scale.ok_or_else(|| Error::InvalidConfig {
        violations: vec!["p0_scale must be resolved (set explicitly or via resolve_p0) before running".into()],
    })?;
    let weights = ut_weights(n, cfg);
    let q = DMatrix::identity(n, n) * cfg.q_scale;
    let r = DMatrix::identity(m, m) * (cfg.r_sd * cfg.r_sd);

    let mut x = xhat0.clone();
    let mut p = DMatrix::identity(n, n) * p0_scale;
    let mut estimates = Vec::with_capacity(measurements.horizon() + 1);
    let mut covariances = Vec::with_capacity(measurements.horizon() + 1);
    estimates.push(x.clone());
    covariances.push(p.clone());

    for k in 1..=measurements.horizon() {
        // Predict.
        let points = sigma_points(&x, &p, &weights, p0_scale, k)?;
        let propagated: Vec<DVector<f64>> = points.iter().map(|s| model.step(s)).collect();
        let x_pred = ut_mean(&propagated, &weights);
        let mut p_pred = ut_cov(&propagated, &x_pred, &weights) + &q;
        symmetrize(&mut p_pred);

        // Update with sigma points regenerated at the predicted density.
        let points = sigma_points(&x_pred, &p_pred, &weights, p0_scale, k)?;
        let outputs: Vec<DVector<f64>> = points.iter().map(|s| model.observe(s)).collect();
        let y_pred = ut_mean(&outputs, &weights);
        let innovation_cov = ut_cov(&outputs, &y_pred, &weights) + &r;
        let cross = ut_cross(&points, &x_pred, &outputs, &y_pred, &weights);

        let chol = innovation_cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularInnovation { step: k })?;
        // K = P_xy S^-1, computed as solving S K^T = P_xy^T.
        let gain = chol.solve(&cross.transpose()).transpose();

        x = &x_pred + &gain * (measurements.output(k) - &y_pred);
        p = p_pred - &gain * &innovation_cov * gain.transpose();
        symmetrize(&mut p);

        if !x.iter().all(|v| v.is_finite()) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowUp {
                context: "ukf estimate".into(),
                step: k,
            });
        }
        estimates.push(x.clone());
        covariances.push(p.clone());
    }

    Ok(UkfRun {
        estimates,
        covariances,
    })
}

/// Absolute error of the targeted component (1-based) at every step of the
/// run.
pub fn error_series(run: &UkfRun, truth: &Trajectory, target: usize) -> Result<Vec<f64>> {
    let n = truth.state_dim();
    if target < 1 || target > n {
        return Err(Error::InvalidConfig {
            violations: vec![format!("target must be in 1..={n}, got {target}")],
        });
    }
    if run.len() > truth.states().len() {
        return Err(Error::DimensionMismatch {
            what: "truth trajectory length",
            expected: run.len(),
            got: truth.states().len(),
        });
    }
    Ok(run
        .estimates
        .iter()
        .enumerate()
        .map(|(k, xhat)| (xhat[target - 1] - truth.state(k)[target - 1]).abs())
        .collect())
}
