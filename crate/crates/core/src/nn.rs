//! Multilayer perceptron learners and their losses.
//!
//! Parameters are stored flat, layer-major, weights before biases. A layer
//! mapping `fan_in -> fan_out` stores its weight as a row-major
//! `fan_in x fan_out` matrix (inputs are row vectors, `y = x W + b`)
//! followed by `fan_out` biases.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::math;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_POLICY_STDDEV: f64 = 0.1;

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
}

impl Activation {
    pub fn slope(&self) -> f64 {
        match *self {
            Activation::LeakyRelu(s) => s,
            Activation::Relu => 0.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Head {
    SoftmaxClassifier,
    LinearRegressor,
    GaussianPolicy { stddev: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidSpec(String),
    DimensionMismatch { expected: usize, got: usize },
    ParameterLayout { expected: usize, got: usize },
    LabelOutOfRange { label: usize, classes: usize },
    InvalidStddev(f64),
    NotAClassifier,
    Autodiff(AutodiffError),
}

impl From<AutodiffError> for ModelError {
    fn from(e: AutodiffError) -> Self {
        ModelError::Autodiff(e)
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidSpec(why) => write!(f, "invalid model spec: {why}"),
            ModelError::DimensionMismatch { expected, got } => {
                write!(f, "input has {got} features, model expects {expected}")
            }
            ModelError::ParameterLayout { expected, got } => {
                write!(f, "expected {expected} parameters, got {got}")
            }
            ModelError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            ModelError::InvalidStddev(s) => write!(f, "standard deviation must be positive, got {s}"),
            ModelError::NotAClassifier => write!(f, "operation needs a softmax classifier head"),
            ModelError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ModelError {}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
    head: Head,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, head: Head) -> Result<Self, ModelError> {
        if layer_sizes.len() < 3 {
            return Err(ModelError::InvalidSpec(alloc::format!(
                "need input, at least one hidden layer and output; got {} sizes",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(ModelError::InvalidSpec("layer sizes must be >= 1".into()));
        }
        if let Head::GaussianPolicy { stddev } = head {
            if !(stddev > 0.0) {
                return Err(ModelError::InvalidStddev(stddev));
            }
        }
        Ok(MlpSpec {
            layer_sizes,
            activation,
            head,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Shapes of the parameter tensors in layout order.
    pub fn param_shapes(&self) -> Vec<Shape> {
        self.layers()
            .flat_map(|(i, o)| [Shape::new(i, o), Shape::new(1, o)])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|(i, o)| i * o + o).sum()
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        let mut flat = Vec::with_capacity(self.param_count());
        for (i, o) in self.layers() {
            let bound = math::sqrt(6.0 / (i + o) as f64);
            flat.extend((0..i * o).map(|_| rng.random_range(-bound..=bound)));
            flat.extend(core::iter::repeat_n(0.0, o));
        }
        ModelParams(flat)
    }

    pub fn zeros(&self) -> ModelParams {
        ModelParams(alloc::vec![0.0; self.param_count()])
    }
}

/// Flat parameter vector of an [`MlpSpec`] (θ, an adapted θᵢ, or a vector
/// of per-parameter step sizes aligned with θ).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Splits into per-layer weight and bias tensors.
    pub fn unflatten(&self, spec: &MlpSpec) -> Result<Vec<Tensor>, ModelError> {
        if self.0.len() != spec.param_count() {
            return Err(ModelError::ParameterLayout {
                expected: spec.param_count(),
                got: self.0.len(),
            });
        }
        let mut offset = 0;
        Ok(spec
            .param_shapes()
            .into_iter()
            .map(|s| {
                let t = Tensor::from_vec(s.rows, s.cols, self.0[offset..offset + s.len()].to_vec()).unwrap();
                offset += s.len();
                t
            })
            .collect())
    }

    pub fn flatten(tensors: &[Tensor]) -> Self {
        ModelParams(tensors.iter().flat_map(|t| t.data().iter().copied()).collect())
    }

    /// Registers every parameter tensor as a trainable leaf.
    pub fn to_leaves(&self, spec: &MlpSpec, tape: &mut Tape) -> Result<Vec<Var>, ModelError> {
        Ok(self.unflatten(spec)?.into_iter().map(|t| tape.leaf(t)).collect())
    }

    pub fn to_constants(&self, spec: &MlpSpec, tape: &mut Tape) -> Result<Vec<Var>, ModelError> {
        Ok(self.unflatten(spec)?.into_iter().map(|t| tape.constant(t)).collect())
    }

    /// Reads the current values of parameter variables back off a tape.
    pub fn from_vars(tape: &Tape, vars: &[Var]) -> Self {
        ModelParams(
            vars.iter()
                .flat_map(|v| tape.value(*v).data().iter().copied())
                .collect(),
        )
    }
}

fn check_layout(spec: &MlpSpec, params: &[Shape]) -> Result<(), ModelError> {
    let want = spec.param_shapes();
    if want.as_slice() != params {
        return Err(ModelError::ParameterLayout {
            expected: spec.param_count(),
            got: params.iter().map(|s| s.len()).sum(),
        });
    }
    Ok(())
}

/// Forward pass on the tape. `input` is `batch x input_dim`; the result is
/// `batch x output_dim` (logits, predictions or action means).
pub fn forward(tape: &mut Tape, spec: &MlpSpec, params: &[Var], input: Var) -> Result<Var, ModelError> {
    let shapes: Vec<Shape> = params.iter().map(|p| p.shape()).collect();
    check_layout(spec, &shapes)?;
    if input.shape().cols != spec.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: spec.input_dim(),
            got: input.shape().cols,
        });
    }
    let n_layers = params.len() / 2;
    let slope = spec.activation.slope();
    let mut h = input;
    for (l, wb) in params.chunks_exact(2).enumerate() {
        let z = tape.matmul(h, wb[0])?;
        h = tape.add_broadcast(z, wb[1])?;
        if l + 1 < n_layers {
            h = tape.leaky_relu(h, slope)?;
        }
    }
    Ok(h)
}

/// Tape-free forward pass, bit-identical to [`forward`].
pub fn forward_values(spec: &MlpSpec, params: &[Tensor], input: &Tensor) -> Result<Tensor, ModelError> {
    let shapes: Vec<Shape> = params.iter().map(|p| p.shape()).collect();
    check_layout(spec, &shapes)?;
    if input.cols() != spec.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: spec.input_dim(),
            got: input.cols(),
        });
    }
    let n_layers = params.len() / 2;
    let slope = spec.activation.slope();
    let mut h = input.clone();
    for (l, wb) in params.chunks_exact(2).enumerate() {
        let z = h.matmul(&wb[0]);
        let b = wb[1].expand(z.shape());
        h = z.zip_map(&b, |x, y| x + y);
        if l + 1 < n_layers {
            h = h.map(|x| if x > 0.0 { x } else { slope * x });
        }
    }
    Ok(h)
}

/// Smallest `|z|` over all hidden pre-activations for `input`: how close
/// the network sits to an activation kink.
pub fn min_hidden_preactivation(spec: &MlpSpec, params: &[Tensor], input: &Tensor) -> Result<f64, ModelError> {
    let shapes: Vec<Shape> = params.iter().map(|p| p.shape()).collect();
    check_layout(spec, &shapes)?;
    let n_layers = params.len() / 2;
    let slope = spec.activation.slope();
    let mut h = input.clone();
    let mut closest = f64::INFINITY;
    for wb in params.chunks_exact(2).take(n_layers - 1) {
        let z = h.matmul(&wb[0]);
        let z = z.zip_map(&wb[1].expand(z.shape()), |x, y| x + y);
        closest = z.data().iter().fold(closest, |m, v| m.min(math::abs(*v)));
        h = z.map(|x| if x > 0.0 { x } else { slope * x });
    }
    Ok(closest)
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax(tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError> {
    let v = tape.value(logits);
    let maxes: Vec<f64> = (0..v.rows())
        .map(|r| v.row_slice(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let maxes = tape.constant(Tensor::column(maxes));
    let shifted = tape.sub_broadcast(logits, maxes)?;
    let e = tape.exp(shifted)?;
    let s = tape.sum_cols(e)?;
    let lse = tape.ln(s)?;
    tape.sub_broadcast(shifted, lse)
}

/// Row-wise softmax probabilities.
pub fn softmax(tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError> {
    let lp = log_softmax(tape, logits)?;
    tape.exp(lp)
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor, ModelError> {
    let mut t = Tensor::zeros(Shape::new(labels.len(), classes));
    for (r, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(ModelError::LabelOutOfRange { label: l, classes });
        }
        t.data_mut()[r * classes + l] = 1.0;
    }
    Ok(t)
}

/// Mean over rows of `-ln softmax(logits)[label]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var, ModelError> {
    let shape = logits.shape();
    if labels.len() != shape.rows {
        return Err(ModelError::DimensionMismatch {
            expected: shape.rows,
            got: labels.len(),
        });
    }
    let mask = one_hot(labels, shape.cols)?;
    let mask = tape.constant(mask);
    let lp = log_softmax(tape, logits)?;
    let picked = tape.mul(lp, mask)?;
    let s = tape.sum(picked)?;
    Ok(tape.scale(s, -1.0 / shape.rows as f64)?)
}

/// Mean of squared differences.
pub fn mean_squared_error(tape: &mut Tape, prediction: Var, target: Var) -> Result<Var, AutodiffError> {
    let d = tape.sub(prediction, target)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq)
}

/// Per-row Gaussian log-density of `actions` (summed over action
/// dimensions) under an isotropic Gaussian centred on `mean`. `batch x 1`.
pub fn gaussian_log_prob(tape: &mut Tape, mean: Var, stddev: f64, actions: Var) -> Result<Var, ModelError> {
    if !(stddev > 0.0) {
        return Err(ModelError::InvalidStddev(stddev));
    }
    let dims = mean.shape().cols as f64;
    let d = tape.sub(actions, mean)?;
    let sq = tape.mul(d, d)?;
    let s = tape.sum_cols(sq)?;
    let s = tape.scale(s, -0.5 / (stddev * stddev))?;
    Ok(tape.add_scalar(s, -dims * (math::ln(stddev) + 0.5 * math::LN_2PI))?)
}
