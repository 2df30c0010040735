//! Meta-training objectives: plain MAML, entropy-reduction TAML and
//! inequality-minimization TAML.

use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::inequality::{self, MeasureError, MeasureKind};
use crate::nn::{self, Head, MlpSpec, ModelError};

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    Maml,
    /// Expected post-update loss plus `lambda * (-H(f_θ) + H(f_θᵢ))`.
    EntropyReduction {
        lambda: f64,
    },
    /// Expected post-update loss plus `lambda * -H(f_θ)`.
    EntropyMaxOnly {
        lambda: f64,
    },
    /// Expected post-update loss plus `lambda * I({L(f_θ)})` over the
    /// pre-update losses of the batch.
    Inequality {
        measure: MeasureKind,
        lambda: f64,
    },
}

impl ObjectiveKind {
    pub fn lambda(&self) -> f64 {
        match *self {
            ObjectiveKind::Maml => 0.0,
            ObjectiveKind::EntropyReduction { lambda }
            | ObjectiveKind::EntropyMaxOnly { lambda }
            | ObjectiveKind::Inequality { lambda, .. } => lambda,
        }
    }

    /// Whether the objective reads prediction entropies. False at `lambda = 0`.
    pub fn needs_entropy(&self) -> bool {
        matches!(
            self,
            ObjectiveKind::EntropyReduction { .. } | ObjectiveKind::EntropyMaxOnly { .. }
        ) && self.lambda() != 0.0
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let l = self.lambda();
        if !(l >= 0.0) || !l.is_finite() {
            return Err(ObjectiveError::InvalidLambda(l));
        }
        if let ObjectiveKind::Inequality {
            measure: MeasureKind::Atkinson(a),
            ..
        } = self
        {
            if !(*a >= 0.0) {
                return Err(ObjectiveError::Measure(MeasureError::NegativeAversion(*a)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveError {
    InvalidLambda(f64),
    EmptyBatch,
    /// Entropy lists missing or not aligned with the loss lists.
    MissingEntropies,
    Measure(MeasureError),
    Model(ModelError),
}

impl From<AutodiffError> for ObjectiveError {
    fn from(e: AutodiffError) -> Self {
        ObjectiveError::Model(ModelError::Autodiff(e))
    }
}

impl From<MeasureError> for ObjectiveError {
    fn from(e: MeasureError) -> Self {
        ObjectiveError::Measure(e)
    }
}

impl From<ModelError> for ObjectiveError {
    fn from(e: ModelError) -> Self {
        ObjectiveError::Model(e)
    }
}

impl fmt::Display for ObjectiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveError::InvalidLambda(l) => write!(f, "lambda must be finite and >= 0, got {l}"),
            ObjectiveError::EmptyBatch => write!(f, "meta-batch is empty"),
            ObjectiveError::MissingEntropies => write!(
                f,
                "entropy objective needs pre- and post-update entropies for every task"
            ),
            ObjectiveError::Measure(e) => write!(f, "{e}"),
            ObjectiveError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ObjectiveError {}

/// Per-task quantities of one meta-batch, all scalar tape variables.
#[derive(Clone, Debug, Default)]
pub struct MetaBatchEval {
    /// `L(f_θ)` on each task's support set.
    pub pre_losses: Vec<Var>,
    /// `L(f_θᵢ)` on each task's query set.
    pub post_losses: Vec<Var>,
    /// `H(f_θ)`; empty when the objective does not use entropies.
    pub pre_entropies: Vec<Var>,
    /// `H(f_θᵢ)`; empty when the objective does not use entropies.
    pub post_entropies: Vec<Var>,
}

impl MetaBatchEval {
    pub fn len(&self) -> usize {
        self.post_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.post_losses.is_empty()
    }

    pub fn has_entropies(&self) -> bool {
        let m = self.len();
        self.pre_entropies.len() == m && self.post_entropies.len() == m
    }
}

/// The assembled objective and the regularizer it added.
#[derive(Copy, Clone, Debug)]
pub struct ObjectiveValue {
    pub total: Var,
    /// Mean post-update loss, the MAML term.
    pub task_loss: Var,
    /// Unweighted regularizer; `None` when `lambda = 0` or for MAML.
    pub regularizer: Option<Var>,
}

/// Mean over rows of the Shannon entropy (nats) of `softmax(logits)`.
pub fn entropy_of_logits(tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError> {
    let lp = nn::log_softmax(tape, logits)?;
    let p = tape.exp(lp)?;
    // p underflows to exactly 0 before lp leaves the finite range, so
    // 0 * ln 0 terms vanish
    let plp = tape.mul(p, lp)?;
    let h = tape.sum_cols(plp)?;
    let m = tape.mean(h)?;
    tape.neg(m)
}

/// Mean prediction entropy of the classifier over `samples` (`n x input_dim`).
pub fn prediction_entropy(tape: &mut Tape, spec: &MlpSpec, params: &[Var], samples: Var) -> Result<Var, ModelError> {
    if spec.head() != Head::SoftmaxClassifier {
        return Err(ModelError::NotAClassifier);
    }
    if samples.shape().rows == 0 {
        return Err(ModelError::DimensionMismatch { expected: 1, got: 0 });
    }
    let logits = nn::forward(tape, spec, params, samples)?;
    Ok(entropy_of_logits(tape, logits)?)
}

fn batch_mean(tape: &mut Tape, xs: &[Var]) -> Result<Var, AutodiffError> {
    let row = tape.concat_cols(xs)?;
    tape.mean(row)
}

/// Expected post-update query loss.
pub fn maml_objective(tape: &mut Tape, eval: &MetaBatchEval) -> Result<ObjectiveValue, ObjectiveError> {
    if eval.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let task_loss = batch_mean(tape, &eval.post_losses)?;
    Ok(ObjectiveValue {
        total: task_loss,
        task_loss,
        regularizer: None,
    })
}

fn with_regularizer(
    tape: &mut Tape,
    base: ObjectiveValue,
    lambda: f64,
    regularizer: Var,
) -> Result<ObjectiveValue, ObjectiveError> {
    let weighted = tape.scale(regularizer, lambda)?;
    let total = tape.add(base.task_loss, weighted)?;
    Ok(ObjectiveValue {
        total,
        task_loss: base.task_loss,
        regularizer: Some(regularizer),
    })
}

/// `mean L(f_θᵢ) + λ · mean(-H(f_θ) + H(f_θᵢ))`.
pub fn entropy_reduction_objective(
    tape: &mut Tape,
    eval: &MetaBatchEval,
    lambda: f64,
) -> Result<ObjectiveValue, ObjectiveError> {
    let base = maml_objective(tape, eval)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    if !eval.has_entropies() {
        return Err(ObjectiveError::MissingEntropies);
    }
    let pre = batch_mean(tape, &eval.pre_entropies)?;
    let post = batch_mean(tape, &eval.post_entropies)?;
    let reduction = tape.sub(post, pre)?;
    with_regularizer(tape, base, lambda, reduction)
}

/// `mean L(f_θᵢ) - λ · mean H(f_θ)`.
pub fn entropy_max_only_objective(
    tape: &mut Tape,
    eval: &MetaBatchEval,
    lambda: f64,
) -> Result<ObjectiveValue, ObjectiveError> {
    let base = maml_objective(tape, eval)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    if eval.pre_entropies.len() != eval.len() {
        return Err(ObjectiveError::MissingEntropies);
    }
    let pre = batch_mean(tape, &eval.pre_entropies)?;
    let neg = tape.neg(pre)?;
    with_regularizer(tape, base, lambda, neg)
}

/// `mean L(f_θᵢ) + λ · I({L(f_θ)})`; the measure sees pre-update losses only.
pub fn inequality_objective(
    tape: &mut Tape,
    eval: &MetaBatchEval,
    measure: MeasureKind,
    lambda: f64,
    floor: f64,
) -> Result<ObjectiveValue, ObjectiveError> {
    let base = maml_objective(tape, eval)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    let reg = inequality::measure_scalars(tape, measure, &eval.pre_losses, floor)?;
    with_regularizer(tape, base, lambda, reg)
}

pub fn objective(
    tape: &mut Tape,
    kind: ObjectiveKind,
    eval: &MetaBatchEval,
    floor: f64,
) -> Result<ObjectiveValue, ObjectiveError> {
    kind.validate()?;
    match kind {
        ObjectiveKind::Maml => maml_objective(tape, eval),
        ObjectiveKind::EntropyReduction { lambda } => entropy_reduction_objective(tape, eval, lambda),
        ObjectiveKind::EntropyMaxOnly { lambda } => entropy_max_only_objective(tape, eval, lambda),
        ObjectiveKind::Inequality { measure, lambda } => inequality_objective(tape, eval, measure, lambda, floor),
    }
}
