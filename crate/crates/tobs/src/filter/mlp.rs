//! Feedforward network: composition of affine maps with an elementwise
//! tanh in every layer, including the scalar output layer (a linear output
//! can be opted into). Inputs pass through an affine standardization that
//! is part of the stored model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::dataset::Dataset;
use crate::rng::rng_from_seed;

/// Standard hidden width of the default architecture.
pub const DEFAULT_HIDDEN_WIDTH: usize = 32;
/// Hidden layers of the default architecture; with the scalar output layer
/// the network has eight affine maps in total.
pub const DEFAULT_HIDDEN_LAYERS: usize = 7;

/// Input standardization baked into the model.
#[derive(Clone, Debug, PartialEq)]
pub struct InputNorm {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
}

impl InputNorm {
    fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            sd: DVector::from_element(dim, 1.0),
        }
    }
}

/// One affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `rows = fan_out`, `cols = fan_in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Scalar-valued feedforward network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    /// Skip the activation on the final layer. Off by default: the
    /// composition applies tanh in every layer.
    pub linear_output: bool,
    norm: InputNorm,
}

/// Per-layer loss gradient, same shapes as the network parameters.
#[derive(Clone, Debug)]
pub struct MlpGradient {
    pub layers: Vec<Layer>,
}

impl MlpGradient {
    fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// Flatten in the same order as [`Mlp::params_to_vec`].
    pub fn to_vec(&self) -> DVector<f64> {
        flatten(self.layers.iter())
    }
}

fn flatten<'a>(layers: impl Iterator<Item = &'a Layer>) -> DVector<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    DVector::from_vec(out)
}

impl Mlp {
    /// Build a network with Glorot-uniform weights and zero biases.
    /// `dims` lists the layer sizes from input to the scalar output,
    /// e.g. `[40, 32, 32, 1]`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut violations = Vec::new();
        if dims.len() < 2 {
            violations.push("network needs at least one layer".into());
        }
        if dims.iter().any(|&d| d == 0) {
            violations.push("layer sizes must be positive".into());
        }
        if dims.len() >= 2 && dims.last() != Some(&1) {
            violations.push(format!("output dimension must be 1, got {:?}", dims.last()));
        }
        Error::check_violations(violations)?;

        let mut rng = rng_from_seed(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                    (2.0 * rng.random::<f64>() - 1.0) * limit
                });
                Layer {
                    weights,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            linear_output: false,
            norm: InputNorm::identity(dims[0]),
        })
    }

    /// Eight affine maps: seven hidden layers of width 32 plus the scalar
    /// output layer, tanh activation throughout.
    pub fn default_architecture(input_dim: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(DEFAULT_HIDDEN_WIDTH).take(DEFAULT_HIDDEN_LAYERS));
        dims.push(1);
        Self::new(&dims, seed)
    }

    /// Build from explicit layers (used by the loader and tests).
    pub fn from_layers(layers: Vec<Layer>, linear_output: bool, norm: InputNorm) -> Result<Self> {
        let mut violations = Vec::new();
        if layers.is_empty() {
            violations.push("network needs at least one layer".into());
        } else {
            for (k, pair) in layers.windows(2).enumerate() {
                if pair[1].weights.ncols() != pair[0].weights.nrows() {
                    violations.push(format!(
                        "layer {} output dim {} does not feed layer {} input dim {}",
                        k + 1,
                        pair[0].weights.nrows(),
                        k + 2,
                        pair[1].weights.ncols()
                    ));
                }
            }
            for (k, l) in layers.iter().enumerate() {
                if l.bias.len() != l.weights.nrows() {
                    violations.push(format!("layer {} bias length mismatch", k + 1));
                }
            }
            if layers.last().unwrap().weights.nrows() != 1 {
                violations.push("output layer must be scalar".into());
            }
            if norm.mean.len() != layers[0].weights.ncols()
                || norm.sd.len() != layers[0].weights.ncols()
            {
                violations.push("normalization dimension mismatch".into());
            }
        }
        Error::check_violations(violations)?;
        Ok(Self {
            layers,
            linear_output,
            norm,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Layer sizes from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalization(&self) -> &InputNorm {
        &self.norm
    }

    /// Set the input standardization. Components with a standard deviation
    /// below 1e-12 are treated as constant and left unscaled.
    pub fn set_normalization(&mut self, mean: DVector<f64>, sd: DVector<f64>) -> Result<()> {
        if mean.len() != self.input_dim() || sd.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "normalization vectors",
                expected: self.input_dim(),
                got: mean.len(),
            });
        }
        let sd = sd.map(|v| if v < 1e-12 { 1.0 } else { v });
        self.norm = InputNorm { mean, sd };
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flatten all parameters (per layer: weights column-major, then bias).
    pub fn params_to_vec(&self) -> DVector<f64> {
        flatten(self.layers.iter())
    }

    pub fn set_params_from_vec(&mut self, params: &DVector<f64>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut() {
                *v = params[offset];
                offset += 1;
            }
            for v in l.bias.iter_mut() {
                *v = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    fn normalize_columns(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = z.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.norm.mean;
            col.component_div_assign(&self.norm.sd);
        }
        out
    }

    /// Evaluate the network on one input window.
    pub fn forward(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        let mut a = (z - &self.norm.mean).component_div(&self.norm.sd);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut pre = &layer.weights * a + &layer.bias;
            if !(k == last && self.linear_output) {
                pre.apply(|v| *v = v.tanh());
            }
            a = pre;
        }
        Ok(a[0])
    }

    /// Evaluate on a batch of input columns.
    pub fn forward_batch(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        if z.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input batch",
                expected: self.input_dim(),
                got: z.nrows(),
            });
        }
        let activations = self.forward_chunk(&self.normalize_columns(z));
        Ok(activations.last().unwrap().row(0).transpose())
    }

    /// Forward pass storing every post-activation layer output.
    fn forward_chunk(&self, a0: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let batch = a0.ncols();
        let last = self.layers.len() - 1;
        let mut activations: Vec<DMatrix<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let below = if k == 0 { a0 } else { &activations[k - 1] };
            let mut pre = &layer.weights * below;
            for j in 0..batch {
                let mut col = pre.column_mut(j);
                col += &layer.bias;
            }
            if !(k == last && self.linear_output) {
                pre.apply(|v| *v = v.tanh());
            }
            activations.push(pre);
        }
        activations
    }

    /// Gradient of the summed squared error over one chunk, by reverse-mode
    /// accumulation. Returns `(sum of squared errors, gradient of it)`.
    fn chunk_loss_gradient(
        &self,
        a0: &DMatrix<f64>,
        labels: nalgebra::DVectorView<'_, f64>,
    ) -> (f64, MlpGradient) {
        let activations = self.forward_chunk(a0);
        let last = self.layers.len() - 1;
        let residual = activations[last].row(0).transpose() - labels;
        let sum_sq = residual.norm_squared();

        let mut grad = MlpGradient::zeros_like(self);
        // d(sum of squares)/d(prediction) = 2 * residual.
        let mut delta = DMatrix::from_rows(&[(residual * 2.0).transpose()]);
        for k in (0..self.layers.len()).rev() {
            if !(k == last && self.linear_output) {
                // tanh' expressed through the stored activation.
                delta.zip_apply(&activations[k], |d, a| *d *= 1.0 - a * a);
            }
            let below = if k == 0 { a0 } else { &activations[k - 1] };
            grad.layers[k]
                .weights
                .gemm(1.0, &delta, &below.transpose(), 0.0);
            grad.layers[k].bias = delta.column_sum();
            if k > 0 {
                delta = self.layers[k].weights.tr_mul(&delta);
            }
        }
        (sum_sq, grad)
    }

    /// Mean squared error over the dataset and its exact gradient with
    /// respect to every weight and bias.
    ///
    /// Samples are processed in fixed-size chunks that are reduced in chunk
    /// order, so the result is independent of the parallel schedule.
    pub fn loss_and_gradient(&self, data: &Dataset) -> Result<(f64, MlpGradient)> {
        if data.is_empty() {
            return Err(Error::InvalidConfig {
                violations: vec!["dataset must not be empty".into()],
            });
        }
        if data.input_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "dataset input",
                expected: self.input_dim(),
                got: data.input_dim(),
            });
        }
        let count = data.len();
        let normalized = self.normalize_columns(data.inputs());

        const CHUNK: usize = 2048;
        let ranges: Vec<(usize, usize)> = (0..count)
            .step_by(CHUNK)
            .map(|start| (start, (start + CHUNK).min(count)))
            .collect();

        use rayon::prelude::*;
        let partials: Vec<(f64, MlpGradient)> = ranges
            .par_iter()
            .map(|&(start, end)| {
                let cols = normalized.columns(start, end - start).into_owned();
                self.chunk_loss_gradient(&cols, data.labels().rows(start, end - start))
            })
            .collect();

        let mut total = 0.0;
        let mut grad = MlpGradient::zeros_like(self);
        for (sum_sq, partial) in &partials {
            total += sum_sq;
            grad.add_assign(partial);
        }
        let scale = 1.0 / count as f64;
        grad.scale(scale);
        Ok((total * scale, grad))
    }
}
