//! Deep filter: a feedforward network mapping a flattened output window
//! directly to an estimate of the targeted state variable, trained by
//! minimizing mean squared error with memory-limited BFGS.

pub mod dataset;
pub mod lbfgs;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    build_dataset, evaluate_rmse, flatten_window, Dataset, DatagenConfig, Provenance, Role,
    WINDOWS_PER_TRAJECTORY,
};
pub use lbfgs::{minimize, LbfgsOptions, LbfgsOutcome};
pub use mlp::{InputNorm, Layer, Mlp, MlpGradient};

/// Training setup: optimizer settings, weight-initialization seed and the
/// input-normalization policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Curvature pairs kept by the memory-limited BFGS.
    pub memory: usize,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Seed of the Glorot-uniform weight initialization.
    pub init_seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Skip the activation on the output layer. On by default for
    /// training: targeted values reach beyond tanh's range (|u| up to ~2
    /// in this problem), which otherwise floors the achievable error.
    pub linear_output: bool,
    /// Standardize inputs with training-set mean/sd, baked into the model.
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            memory: 20,
            max_iterations: 400,
            grad_tolerance: 1e-6,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            init_seed: 0,
            hidden_layers: mlp::DEFAULT_HIDDEN_LAYERS,
            hidden_width: mlp::DEFAULT_HIDDEN_WIDTH,
            linear_output: true,
            normalize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.memory < 1 {
            violations.push("memory must be >= 1".into());
        }
        if self.max_iterations < 1 {
            violations.push("max_iterations must be >= 1".into());
        }
        if !(self.grad_tolerance.is_finite() && self.grad_tolerance > 0.0) {
            violations.push(format!(
                "grad_tolerance must be finite and > 0, got {}",
                self.grad_tolerance
            ));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            violations.push(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            ));
        }
        if self.hidden_width < 1 {
            violations.push("hidden_width must be >= 1".into());
        }
        Error::check_violations(violations)
    }

    /// Layer sizes from `input_dim` to the scalar output.
    pub fn architecture(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(1);
        dims
    }

    /// Freshly initialized network for this configuration.
    pub fn build_network(&self, input_dim: usize) -> Result<Mlp> {
        self.validate()?;
        let mut net = Mlp::new(&self.architecture(input_dim), self.init_seed)?;
        net.linear_output = self.linear_output;
        Ok(net)
    }

    fn optimizer_options(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.memory,
            max_iterations: self.max_iterations,
            grad_tolerance: self.grad_tolerance,
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
        }
    }
}

/// A trained network with its optimization record.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub net: Mlp,
    /// Loss at initialization and after every accepted step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The line search gave up early; the best parameters seen were kept.
    pub line_search_failed: bool,
}

/// Fit the network to the training set. When input normalization is on,
/// the training-set mean/sd are baked into the returned model first.
/// Deterministic given the dataset and config; a line-search failure
/// returns the best parameters found, never an error.
pub fn train(mut net: Mlp, train_set: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig {
            violations: vec!["training set must not be empty".into()],
        });
    }
    if net.input_dim() != train_set.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "training inputs",
            expected: net.input_dim(),
            got: train_set.input_dim(),
        });
    }

    if cfg.normalize_inputs {
        let count = train_set.len() as f64;
        let mean = train_set.inputs().column_mean();
        let mut var = nalgebra::DVector::zeros(train_set.input_dim());
        for col in train_set.inputs().column_iter() {
            let centered = col - &mean;
            var += centered.component_mul(&centered);
        }
        var /= count;
        net.set_normalization(mean, var.map(f64::sqrt))?;
    }

    let mut scratch = net.clone();
    let objective = |theta: &nalgebra::DVector<f64>| {
        scratch
            .set_params_from_vec(theta)
            .expect("parameter vector has the right length");
        let (loss, grad) = scratch
            .loss_and_gradient(train_set)
            .expect("dimensions validated before training");
        (loss, grad.to_vec())
    };

    let outcome = minimize(objective, net.params_to_vec(), &cfg.optimizer_options());
    net.set_params_from_vec(&outcome.position)?;

    Ok(TrainResult {
        net,
        loss_history: outcome.history,
        iterations: outcome.iterations,
        converged: outcome.converged,
        line_search_failed: outcome.line_search_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn training_at_a_global_minimum_stays_put() {
        // Labels generated by the initialized network itself.
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_width: 6,
            normalize_inputs: false,
            ..TrainConfig::default()
        };
        let net = cfg.build_network(3).unwrap();
        let mut rng = crate::rng::rng_from_seed(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let inputs = DMatrix::from_fn(3, 50, |_, _| normal.sample(&mut rng));
        let labels = net.forward_batch(&inputs).unwrap();
        let data = Dataset::from_raw(inputs, labels).unwrap();

        let before = net.params_to_vec();
        let result = train(net, &data, &cfg).unwrap();
        assert!(result.loss_history[0] < 1e-28);
        assert!(*result.loss_history.last().unwrap() < 1e-28);
        assert!((result.net.params_to_vec() - before).amax() < 1e-8);
    }

    /// Convex case: a single linear layer recovers the least-squares
    /// solution of a linear-regression dataset.
    #[test]
    fn linear_net_recovers_least_squares() {
        let mut rng = crate::rng::rng_from_seed(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = 4;
        let count = 200;
        let inputs = DMatrix::from_fn(d, count, |_, _| normal.sample(&mut rng));
        let w_true = DVector::from_fn(d, |_, _| normal.sample(&mut rng));
        let labels = DVector::from_fn(count, |i, _| {
            inputs.column(i).dot(&w_true) + 0.5 + 0.01 * normal.sample(&mut rng)
        });
        let data = Dataset::from_raw(inputs.clone(), labels.clone()).unwrap();

        let cfg = TrainConfig {
            hidden_layers: 0,
            linear_output: true,
            normalize_inputs: false,
            max_iterations: 200,
            grad_tolerance: 1e-10,
            ..TrainConfig::default()
        };
        let net = cfg.build_network(d).unwrap();
        let result = train(net, &data, &cfg).unwrap();

        // Normal-equations oracle on the augmented design matrix.
        let mut design = DMatrix::zeros(count, d + 1);
        for i in 0..count {
            for j in 0..d {
                design[(i, j)] = inputs[(j, i)];
            }
            design[(i, d)] = 1.0;
        }
        let gram = design.transpose() * &design;
        let rhs = design.transpose() * &labels;
        let solution = gram.lu().solve(&rhs).unwrap();

        let layer = &result.net.layers()[0];
        for j in 0..d {
            assert!(
                (layer.weights[(0, j)] - solution[j]).abs() < 1e-6,
                "weight {j}: {} vs {}",
                layer.weights[(0, j)],
                solution[j]
            );
        }
        assert!((layer.bias[0] - solution[d]).abs() < 1e-6);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_width: 8,
            max_iterations: 30,
            ..TrainConfig::default()
        };
        let mut rng = crate::rng::rng_from_seed(2);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let inputs = DMatrix::from_fn(5, 120, |_, _| normal.sample(&mut rng));
        let labels = DVector::from_fn(120, |i, _| f64::tanh(inputs.column(i).sum() * 0.3));
        let data = Dataset::from_raw(inputs, labels).unwrap();

        let a = train(cfg.build_network(5).unwrap(), &data, &cfg).unwrap();
        let b = train(cfg.build_network(5).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a.net.params_to_vec(), b.net.params_to_vec());
        assert_eq!(a.loss_history, b.loss_history);
    }
}
