//! Viscous Burgers testbed.
//!
//! The PDE `u_t + u u_x = kappa u_xx` on `[0, L]` with zero Dirichlet
//! boundaries is discretized with central differences in space and classical
//! RK4 in time. The interior values `u_1, ..., u_{Nx-1}` form the state of a
//! [`SystemModel`]; the boundary values are identically zero ghosts that
//! never enter the state. Sensors pick a subset of interior grid values as
//! the output.

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Grid and physical parameters of the discretization.
///
/// Defaults: `L = 2*pi`, `T = 5`, `kappa = 0.14`, `Nx = 50`, `Nt = 100`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    /// Domain length `L`.
    #[serde(rename = "L")]
    pub domain_length: f64,
    /// Final time `T`.
    #[serde(rename = "T")]
    pub final_time: f64,
    /// Viscosity `kappa`.
    pub kappa: f64,
    /// Number of spatial intervals `Nx`; the state has `Nx - 1` components.
    #[serde(rename = "Nx")]
    pub space_intervals: usize,
    /// Number of time steps `Nt`.
    #[serde(rename = "Nt")]
    pub time_steps: usize,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            domain_length: std::f64::consts::TAU,
            final_time: 5.0,
            kappa: 0.14,
            space_intervals: 50,
            time_steps: 100,
        }
    }
}

impl BurgersConfig {
    /// Spatial step `dx = L / Nx`.
    pub fn dx(&self) -> f64 {
        self.domain_length / self.space_intervals as f64
    }

    /// Time step `dt = T / Nt`.
    pub fn dt(&self) -> f64 {
        self.final_time / self.time_steps as f64
    }

    /// Dimension of the interior state vector, `Nx - 1`.
    pub fn state_dim(&self) -> usize {
        self.space_intervals - 1
    }

    /// Grid abscissa `x_i = i dx` of interior index `i` (1-based).
    pub fn grid_point(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.space_intervals < 3 {
            violations.push(format!("Nx must be >= 3, got {}", self.space_intervals));
        }
        if self.time_steps < 1 {
            violations.push(format!("Nt must be >= 1, got {}", self.time_steps));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            violations.push(format!("kappa must be finite and > 0, got {}", self.kappa));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            violations.push(format!(
                "L must be finite and > 0, got {}",
                self.domain_length
            ));
        }
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            violations.push(format!("T must be finite and > 0, got {}", self.final_time));
        }
        Error::check_violations(violations)
    }
}

/// Sensor placement: an ordered, duplicate-free list of interior grid
/// indices, 1-based (`u_i` with `1 <= i <= Nx - 1`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub indices: Vec<usize>,
}

impl SensorLayout {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// Sensors at `u_20, u_21, u_29, u_30`.
    pub fn case1() -> Self {
        Self::new(vec![20, 21, 29, 30])
    }

    /// Sensors at `u_18, u_19, u_30, u_31`.
    pub fn case2() -> Self {
        Self::new(vec![18, 19, 30, 31])
    }

    pub fn for_case(case: u8) -> Result<Self> {
        match case {
            1 => Ok(Self::case1()),
            2 => Ok(Self::case2()),
            other => Err(Error::InvalidConfig {
                violations: vec![format!("sensor case must be 1 or 2, got {other}")],
            }),
        }
    }

    /// All interior indices; the output map becomes the identity.
    pub fn full(config: &BurgersConfig) -> Self {
        Self::new((1..config.space_intervals).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, config: &BurgersConfig) -> Result<()> {
        let mut violations = Vec::new();
        if self.indices.is_empty() {
            violations.push("sensor layout must not be empty".into());
        }
        let mut seen = std::collections::HashSet::new();
        for &i in &self.indices {
            if i < 1 || i >= config.space_intervals {
                violations.push(format!(
                    "sensor index {i} outside interior range 1..={}",
                    config.space_intervals - 1
                ));
            }
            if !seen.insert(i) {
                violations.push(format!("duplicate sensor index {i}"));
            }
        }
        Error::check_violations(violations)
    }
}

/// Semidiscrete right-hand side of the interior grid values: central
/// differences for both the advection term `-u u_x` and the diffusion term
/// `kappa u_xx`, with zero ghost values at both boundaries.
pub fn semidiscrete_rhs(config: &BurgersConfig, u: &DVector<f64>) -> Result<DVector<f64>> {
    let n = config.state_dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "interior state",
            expected: n,
            got: u.len(),
        });
    }
    Ok(rhs_unchecked(config, u))
}

fn rhs_unchecked(config: &BurgersConfig, u: &DVector<f64>) -> DVector<f64> {
    let n = u.len();
    let dx = config.dx();
    let inv_2dx = 1.0 / (2.0 * dx);
    let diff = config.kappa / (dx * dx);
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let right = if i + 1 == n { 0.0 } else { u[i + 1] };
        out[i] = -u[i] * (right - left) * inv_2dx + diff * (right - 2.0 * u[i] + left);
    }
    out
}

/// Classical RK4 step of `du/dt = f(u)` with step `dt`.
pub(crate) fn rk4<F: Fn(&DVector<f64>) -> DVector<f64>>(
    f: F,
    u: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(u);
    let k2 = f(&(u + (dt / 2.0) * &k1));
    let k3 = f(&(u + (dt / 2.0) * &k2));
    let k4 = f(&(u + dt * &k3));
    u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// One RK4 step of the semidiscrete Burgers system.
///
/// Reports which RK stage produced a non-finite value if the step blows up.
pub fn rk4_step(config: &BurgersConfig, u: &DVector<f64>) -> Result<DVector<f64>> {
    let n = config.state_dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "interior state",
            expected: n,
            got: u.len(),
        });
    }
    let dt = config.dt();
    let check = |v: &DVector<f64>, stage: &str, idx: usize| -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalBlowUp {
                context: format!("rk4 stage {stage}"),
                step: idx,
            })
        }
    };
    let k1 = rhs_unchecked(config, u);
    check(&k1, "k1", 1)?;
    let k2 = rhs_unchecked(config, &(u + (dt / 2.0) * &k1));
    check(&k2, "k2", 2)?;
    let k3 = rhs_unchecked(config, &(u + (dt / 2.0) * &k2));
    check(&k3, "k3", 3)?;
    let k4 = rhs_unchecked(config, &(u + dt * &k3));
    check(&k4, "k4", 4)?;
    let next = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check(&next, "update", 5)?;
    Ok(next)
}

/// The discretized Burgers system with a sensor output map.
#[derive(Clone, Debug)]
pub struct BurgersSystem {
    config: BurgersConfig,
    layout: SensorLayout,
}

impl BurgersSystem {
    pub fn config(&self) -> &BurgersConfig {
        &self.config
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }
}

impl SystemModel for BurgersSystem {
    fn state_dim(&self) -> usize {
        self.config.state_dim()
    }

    fn output_dim(&self) -> usize {
        self.layout.len()
    }

    fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        rk4(|u| rhs_unchecked(&self.config, u), x, self.config.dt())
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.layout.len(), self.layout.indices.iter().map(|&i| x[i - 1]))
    }
}

/// Build the Burgers [`SystemModel`]: state dimension `Nx - 1`, output
/// dimension `|layout|`, outputs read in layout order.
pub fn make_system(config: BurgersConfig, layout: SensorLayout) -> Result<BurgersSystem> {
    config.validate()?;
    layout.validate(&config)?;
    Ok(BurgersSystem { config, layout })
}

/// Truncated Fourier series used to draw random initial conditions:
/// `u_i(0) = sum_j alpha_j cos(2 pi j x_i / L) + beta_j sin(2 pi j x_i / L)`.
///
/// The last cosine coefficient is always overwritten with
/// `alpha_NF = -sum_{j < NF} alpha_j` so that the series vanishes at the
/// boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierInit {
    pub sigma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FourierInit {
    /// Build from explicit coefficients (`NF + 1` each); the last cosine
    /// coefficient is replaced to enforce the zero-sum constraint.
    pub fn from_coefficients(mut alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                what: "fourier coefficients",
                expected: alpha.len(),
                got: beta.len(),
            });
        }
        if alpha.len() < 2 {
            return Err(Error::InvalidConfig {
                violations: vec!["fourier mode count NF must be >= 1".into()],
            });
        }
        let nf = alpha.len() - 1;
        alpha[nf] = -alpha[..nf].iter().sum::<f64>();
        Ok(Self {
            sigma: 0.0,
            alpha,
            beta,
        })
    }

    /// Draw `alpha_j, beta_j ~ N(0, sigma^2)` i.i.d. (alphas first, then
    /// betas), then enforce the zero-sum constraint on the alphas.
    pub fn sample(modes: usize, sigma: f64, seed: u64) -> Result<Self> {
        if modes < 1 {
            return Err(Error::InvalidConfig {
                violations: vec![format!("fourier mode count NF must be >= 1, got {modes}")],
            });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig {
                violations: vec![format!("fourier sigma must be finite and > 0, got {sigma}")],
            });
        }
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, sigma).expect("validated above");
        let mut alpha: Vec<f64> = (0..=modes).map(|_| normal.sample(&mut rng)).collect();
        let beta: Vec<f64> = (0..=modes).map(|_| normal.sample(&mut rng)).collect();
        alpha[modes] = -alpha[..modes].iter().sum::<f64>();
        Ok(Self { sigma, alpha, beta })
    }

    /// Evaluate the series at the interior grid points of `config`.
    pub fn evaluate(&self, config: &BurgersConfig) -> DVector<f64> {
        let n = config.state_dim();
        let l = config.domain_length;
        DVector::from_fn(n, |row, _| {
            let x = config.grid_point(row + 1);
            self.alpha
                .iter()
                .zip(&self.beta)
                .enumerate()
                .map(|(j, (a, b))| {
                    let phase = std::f64::consts::TAU * j as f64 * x / l;
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
    }
}

/// Default mode count for random initial conditions.
pub const DEFAULT_FOURIER_MODES: usize = 3;
/// Default coefficient standard deviation for random initial conditions.
pub const DEFAULT_FOURIER_SIGMA: f64 = 0.3;

/// Draw a random initial interior state from the truncated Fourier sampler.
pub fn sample_fourier_initial(
    config: &BurgersConfig,
    modes: usize,
    sigma: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    config.validate()?;
    Ok(FourierInit::sample(modes, sigma, seed)?.evaluate(config))
}
