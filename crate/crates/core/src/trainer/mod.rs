//! Bilevel training: inner adaptation by gradient descent (fixed step or
//! Meta-SGD's learned per-parameter steps) and the outer meta-update.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::autodiff::{AutodiffError, GradMode, Tape, Var};
use crate::inequality::{self, MeasureKind, DEFAULT_FLOOR};
use crate::math;
use crate::nn::{self, Head, MlpSpec, ModelError, ModelParams};
use crate::objectives::{self, MetaBatchEval, ObjectiveError, ObjectiveKind, ObjectiveValue};
use crate::rng::{SeedStreams, Stream};
use crate::tasks::navigation;
use crate::tasks::{sample_task_batch, Task, TaskDistribution};
use crate::tensor::Tensor;

/// Lower bound applied to Meta-SGD step sizes after every meta-update.
pub const MIN_META_SGD_ALPHA: f64 = 1e-6;

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum InnerKind {
    FixedStep(f64),
    /// Learned element-wise step sizes, initialised to the given scalar.
    MetaSgd(f64),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Order {
    /// Differentiate through the inner gradient.
    Second,
    /// Treat the inner gradient as a constant.
    First,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InnerRule {
    pub kind: InnerKind,
    pub steps: usize,
    pub order: Order,
}

impl InnerRule {
    pub fn fixed(alpha: f64, steps: usize, order: Order) -> Self {
        InnerRule {
            kind: InnerKind::FixedStep(alpha),
            steps,
            order,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let alpha = match self.kind {
            InnerKind::FixedStep(a) | InnerKind::MetaSgd(a) => a,
        };
        // alpha = 0 is allowed as the no-adaptation limit
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(TrainError::Config(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("inner steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum MetaOptimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl MetaOptimizer {
    pub fn adam() -> Self {
        MetaOptimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

/// Which samples the entropy terms are estimated on.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EntropySamples {
    Support,
    Query,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub spec: MlpSpec,
    pub objective: ObjectiveKind,
    pub rule: InnerRule,
    pub distribution: TaskDistribution,
    pub meta_batch: usize,
    pub beta: f64,
    pub iterations: u64,
    pub optimizer: MetaOptimizer,
    /// Meta-SGD only: update the step sizes in the outer loop. With `false`
    /// they stay at their initial scalar.
    pub learn_alphas: bool,
    pub entropy_samples: EntropySamples,
    pub floor: f64,
    /// Episodes sampled per navigation task for each policy evaluation.
    pub trajectories: usize,
}

impl TrainConfig {
    pub fn new(spec: MlpSpec, objective: ObjectiveKind, rule: InnerRule, distribution: TaskDistribution) -> Self {
        TrainConfig {
            spec,
            objective,
            rule,
            distribution,
            meta_batch: 32,
            beta: 0.01,
            iterations: 0,
            optimizer: MetaOptimizer::Sgd,
            learn_alphas: true,
            entropy_samples: EntropySamples::Support,
            floor: DEFAULT_FLOOR,
            trajectories: 20,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.rule.validate()?;
        self.objective.validate()?;
        let cfg = |m: String| Err(TrainError::Config(m));
        if self.meta_batch == 0 {
            return cfg("meta_batch must be >= 1".into());
        }
        if matches!(self.objective, ObjectiveKind::Inequality { .. })
            && self.objective.lambda() != 0.0
            && self.meta_batch < 2
        {
            return cfg("inequality objectives need meta_batch >= 2".into());
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return cfg(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.floor > 0.0) {
            return cfg(format!("floor must be > 0, got {}", self.floor));
        }
        let d = &self.distribution;
        if self.spec.input_dim() != d.input_dim() || self.spec.output_dim() != d.output_dim() {
            return cfg(format!(
                "model maps {} -> {} features, tasks need {} -> {}",
                self.spec.input_dim(),
                self.spec.output_dim(),
                d.input_dim(),
                d.output_dim()
            ));
        }
        let head_ok = match d {
            TaskDistribution::Synthetic(_) | TaskDistribution::Pool { .. } => {
                self.spec.head() == Head::SoftmaxClassifier
            }
            TaskDistribution::Sinusoid(_) => self.spec.head() == Head::LinearRegressor,
            TaskDistribution::Navigation(_) => matches!(self.spec.head(), Head::GaussianPolicy { .. }),
        };
        if !head_ok {
            return cfg(format!(
                "model head {:?} does not fit the task distribution",
                self.spec.head()
            ));
        }
        if self.objective.needs_entropy() && self.spec.head() != Head::SoftmaxClassifier {
            return cfg("entropy objectives need a classification task".into());
        }
        if let TaskDistribution::Navigation(n) = d {
            n.validate().map_err(|e| TrainError::Config(format!("{e}")))?;
            if self.rule.order == Order::Second {
                return cfg("navigation adapts with first-order inner gradients only".into());
            }
            if self.trajectories == 0 {
                return cfg("trajectories must be >= 1".into());
            }
        }
        if let TaskDistribution::Pool { pool, episode } = d {
            pool.check(episode).map_err(|e| TrainError::Config(format!("{e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaState {
    pub theta: ModelParams,
    /// Present exactly when the inner rule is Meta-SGD.
    pub alphas: Option<ModelParams>,
    pub iteration: u64,
    pub seed: u64,
    pub adam: Option<AdamState>,
}

impl MetaState {
    /// Fresh θ from the init stream of `seed`.
    pub fn initial(spec: &MlpSpec, rule: &InnerRule, seed: u64) -> Self {
        let theta = spec.init(&mut SeedStreams::new(seed).rng(Stream::Init, 0));
        let alphas = match rule.kind {
            InnerKind::MetaSgd(a) => Some(ModelParams(alloc::vec![a; theta.len()])),
            InnerKind::FixedStep(_) => None,
        };
        MetaState {
            theta,
            alphas,
            iteration: 0,
            seed,
            adam: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    Config(String),
    Model(ModelError),
    Objective(ObjectiveError),
    /// The meta-gradient had a NaN or infinite entry; the step was not taken.
    NonFiniteGradient {
        iteration: u64,
        pre_losses: Vec<f64>,
        post_losses: Vec<f64>,
    },
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        TrainError::Model(ModelError::Autodiff(e))
    }
}

impl From<ObjectiveError> for TrainError {
    fn from(e: ObjectiveError) -> Self {
        TrainError::Objective(e)
    }
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(m) => write!(f, "invalid training config: {m}"),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Objective(e) => write!(f, "{e}"),
            TrainError::NonFiniteGradient {
                iteration,
                pre_losses,
                post_losses,
            } => write!(
                f,
                "non-finite meta-gradient at iteration {iteration} (pre-update losses {pre_losses:?}, post-update losses {post_losses:?})"
            ),
        }
    }
}

impl core::error::Error for TrainError {}

/// Step sizes for one inner update.
#[derive(Copy, Clone, Debug)]
pub enum Alphas<'a> {
    Scalar(f64),
    PerParameter(&'a [Var]),
}

fn descend(tape: &mut Tape, params: &[Var], grads: &[Var], alphas: Alphas<'_>) -> Result<Vec<Var>, AutodiffError> {
    let mut out = Vec::with_capacity(params.len());
    for (i, (&p, &g)) in params.iter().zip(grads).enumerate() {
        let step = match alphas {
            Alphas::Scalar(a) => tape.scale(g, a)?,
            Alphas::PerParameter(a) => tape.mul(a[i], g)?,
        };
        out.push(tape.sub(p, step)?);
    }
    Ok(out)
}

fn values(tape: &Tape, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|v| tape.value(*v).clone()).collect()
}

/// Loss of `params` on one side of a supervised task.
fn supervised_loss(
    tape: &mut Tape,
    spec: &MlpSpec,
    params: &[Var],
    task: &Task,
    query: bool,
) -> Result<Var, ModelError> {
    match task {
        Task::Classification(t) => {
            let set = if query { &t.query } else { &t.support };
            let x = tape.constant(set.features.clone());
            let logits = nn::forward(tape, spec, params, x)?;
            nn::cross_entropy(tape, logits, &set.labels)
        }
        Task::Regression(t) => {
            let (x, y) = if query {
                (&t.query_x, &t.query_y)
            } else {
                (&t.support_x, &t.support_y)
            };
            let x = tape.constant(x.clone());
            let y = tape.constant(y.clone());
            let pred = nn::forward(tape, spec, params, x)?;
            Ok(nn::mean_squared_error(tape, pred, y)?)
        }
        Task::Navigation(_) => unreachable!("navigation losses are built from trajectories"),
    }
}

/// Support-side loss of `params`; navigation samples fresh trajectories.
fn adaptation_loss<R: Rng + ?Sized>(
    tape: &mut Tape,
    spec: &MlpSpec,
    params: &[Var],
    task: &Task,
    trajectories: usize,
    rng: &mut R,
) -> Result<Var, ModelError> {
    match task {
        Task::Navigation(nav) => {
            let trajs = navigation::sample_trajectories(spec, &values(tape, params), nav, trajectories, rng)?;
            navigation::policy_loss(tape, spec, params, &trajs)
        }
        _ => supervised_loss(tape, spec, params, task, false),
    }
}

/// Result of adapting θ to one task.
#[derive(Clone, Debug)]
pub struct Adapted {
    pub params: Vec<Var>,
    /// Support loss at θ, before any update.
    pub pre_loss: Var,
}

/// Applies `rule.steps` gradient steps on the support loss, starting from
/// `theta`. With [`Order::Second`] the returned parameters stay
/// differentiable through the inner gradients; with [`Order::First`] (and
/// always for navigation) the gradients are constants.
#[allow(clippy::too_many_arguments)]
pub fn inner_adapt<R: Rng + ?Sized>(
    tape: &mut Tape,
    spec: &MlpSpec,
    theta: &[Var],
    rule: &InnerRule,
    alphas: Alphas<'_>,
    task: &Task,
    trajectories: usize,
    rng: &mut R,
) -> Result<Adapted, TrainError> {
    if let Task::Classification(t) = task {
        if t.support.is_empty() {
            return Err(TrainError::Config("task has an empty support set".into()));
        }
    }
    let mode = match (rule.order, task) {
        (_, Task::Navigation(_)) | (Order::First, _) => GradMode::Detached,
        (Order::Second, _) => GradMode::Graph,
    };
    let pre_loss = adaptation_loss(tape, spec, theta, task, trajectories, rng)?;
    let mut params = theta.to_vec();
    let mut loss = pre_loss;
    for step in 0..rule.steps {
        if step > 0 {
            loss = adaptation_loss(tape, spec, &params, task, trajectories, rng)?;
        }
        let grads = tape.grad(loss, &params, mode)?;
        params = descend(tape, &params, &grads, alphas)?;
    }
    Ok(Adapted { params, pre_loss })
}

/// The assembled meta-objective for one batch plus its per-task terms.
#[derive(Clone, Debug)]
pub struct MetaBatch {
    pub value: ObjectiveValue,
    pub eval: MetaBatchEval,
}

/// Adapts to every task in order and assembles the configured objective.
pub fn meta_objective<R: Rng + ?Sized>(
    tape: &mut Tape,
    cfg: &TrainConfig,
    theta: &[Var],
    alphas: Alphas<'_>,
    tasks: &[Task],
    rng: &mut R,
) -> Result<MetaBatch, TrainError> {
    let spec = &cfg.spec;
    let entropy = cfg.objective.needs_entropy();
    let mut eval = MetaBatchEval::default();
    for task in tasks {
        let adapted = inner_adapt(tape, spec, theta, &cfg.rule, alphas, task, cfg.trajectories, rng)?;
        let post = match task {
            Task::Navigation(nav) => {
                let trajs =
                    navigation::sample_trajectories(spec, &values(tape, &adapted.params), nav, cfg.trajectories, rng)?;
                navigation::policy_loss(tape, spec, &adapted.params, &trajs)?
            }
            _ => supervised_loss(tape, spec, &adapted.params, task, true)?,
        };
        if entropy {
            let Task::Classification(t) = task else {
                return Err(TrainError::Config(
                    "entropy objectives need a classification task".into(),
                ));
            };
            let samples = match cfg.entropy_samples {
                EntropySamples::Support => &t.support.features,
                EntropySamples::Query => &t.query.features,
            };
            let x = tape.constant(samples.clone());
            eval.pre_entropies
                .push(objectives::prediction_entropy(tape, spec, theta, x)?);
            eval.post_entropies
                .push(objectives::prediction_entropy(tape, spec, &adapted.params, x)?);
        }
        eval.pre_losses.push(adapted.pre_loss);
        eval.post_losses.push(post);
    }
    let value = objectives::objective(tape, cfg.objective, &eval, cfg.floor)?;
    Ok(MetaBatch { value, eval })
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub mean_pre_loss: f64,
    pub mean_post_loss: f64,
    /// `lambda * regularizer`; 0 when the objective adds none.
    pub regularizer_value: f64,
    /// Theil index of the pre-update losses, logged for every objective.
    pub pre_loss_theil: Option<f64>,
    /// Euclidean norm of the full meta-gradient (θ and any step sizes).
    pub grad_norm: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn apply_update(params: &mut [f64], grads: &[f64], beta: f64, optimizer: MetaOptimizer, adam: &mut Option<AdamState>) {
    match optimizer {
        MetaOptimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= beta * g;
            }
        }
        MetaOptimizer::Adam { beta1, beta2, epsilon } => {
            let st = adam.get_or_insert_with(|| AdamState {
                m: alloc::vec![0.0; params.len()],
                v: alloc::vec![0.0; params.len()],
                t: 0,
            });
            st.t += 1;
            let c1 = 1.0 - math::powf(beta1, st.t as f64);
            let c2 = 1.0 - math::powf(beta2, st.t as f64);
            for i in 0..params.len() {
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grads[i];
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grads[i] * grads[i];
                params[i] -= beta * (st.m[i] / c1) / (math::sqrt(st.v[i] / c2) + epsilon);
            }
        }
    }
}

/// Adapts to `tasks`, evaluates the objective and takes one meta-gradient
/// step on θ (and the Meta-SGD step sizes when they are learned).
pub fn meta_step<R: Rng + ?Sized>(
    state: &mut MetaState,
    cfg: &TrainConfig,
    tasks: &[Task],
    rng: &mut R,
) -> Result<IterationMetrics, TrainError> {
    let spec = &cfg.spec;
    let mut tape = Tape::new();
    let theta = state.theta.to_leaves(spec, &mut tape)?;
    let learn_alphas = cfg.learn_alphas && state.alphas.is_some();
    let alpha_vars = match (&state.alphas, cfg.rule.kind) {
        (Some(a), InnerKind::MetaSgd(_)) if learn_alphas => Some(a.to_leaves(spec, &mut tape)?),
        (Some(a), InnerKind::MetaSgd(_)) => Some(a.to_constants(spec, &mut tape)?),
        (_, InnerKind::MetaSgd(_)) => return Err(TrainError::Config("Meta-SGD state has no step sizes".into())),
        _ => None,
    };
    let alphas = match (&alpha_vars, cfg.rule.kind) {
        (Some(a), _) => Alphas::PerParameter(a),
        (None, InnerKind::FixedStep(a)) => Alphas::Scalar(a),
        (None, InnerKind::MetaSgd(a)) => Alphas::Scalar(a),
    };

    let batch = meta_objective(&mut tape, cfg, &theta, alphas, tasks, rng)?;
    let pre: Vec<f64> = batch.eval.pre_losses.iter().map(|v| tape.scalar(*v)).collect();
    let post: Vec<f64> = batch.eval.post_losses.iter().map(|v| tape.scalar(*v)).collect();
    let regularizer_value = batch
        .value
        .regularizer
        .map(|r| cfg.objective.lambda() * tape.scalar(r))
        .unwrap_or(0.0);

    let mut wrt = theta.clone();
    if learn_alphas {
        wrt.extend(alpha_vars.iter().flatten().copied());
    }
    let grads = tape.backward(batch.value.total, &wrt)?;
    if grads.values.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient {
            iteration: state.iteration,
            pre_losses: pre,
            post_losses: post,
        });
    }

    let n = state.theta.len();
    let mut flat = state.theta.0.clone();
    if learn_alphas {
        flat.extend_from_slice(&state.alphas.as_ref().expect("alphas").0);
    }
    apply_update(&mut flat, &grads.values, cfg.beta, cfg.optimizer, &mut state.adam);
    if learn_alphas {
        let a = state.alphas.as_mut().expect("alphas");
        for (dst, src) in a.0.iter_mut().zip(&flat[n..]) {
            *dst = src.max(MIN_META_SGD_ALPHA);
        }
    }
    flat.truncate(n);
    state.theta = ModelParams(flat);

    let metrics = IterationMetrics {
        iteration: state.iteration,
        mean_pre_loss: mean(&pre),
        mean_post_loss: mean(&post),
        regularizer_value,
        pre_loss_theil: inequality::measure_values(MeasureKind::Theil, &pre, cfg.floor).ok(),
        grad_norm: grads.norm(),
    };
    state.iteration += 1;
    Ok(metrics)
}

/// Runs meta-iterations `state.iteration .. cfg.iterations`. Iteration `i`
/// draws its tasks from stream `(Tasks, i)` and its trajectory noise from
/// `(Trajectories, i)`, so every method sees the same task stream for a
/// given seed. `on_iteration` sees the state after each step.
pub fn train<E, F>(cfg: &TrainConfig, mut state: MetaState, mut on_iteration: F) -> Result<MetaState, E>
where
    E: From<TrainError>,
    F: FnMut(&MetaState, &IterationMetrics) -> Result<(), E>,
{
    cfg.validate()?;
    let streams = SeedStreams::new(state.seed);
    while state.iteration < cfg.iterations {
        let it = state.iteration;
        let tasks = sample_task_batch(&cfg.distribution, cfg.meta_batch, &mut streams.rng(Stream::Tasks, it));
        let mut rng = streams.rng(Stream::Trajectories, it);
        let metrics = meta_step(&mut state, cfg, &tasks, &mut rng)?;
        on_iteration(&state, &metrics)?;
    }
    Ok(state)
}

/// Per-task metric reported by [`evaluate_meta_test`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EvalMetric {
    /// Query accuracy in [0, 1].
    Accuracy,
    /// Query mean squared error.
    QueryLoss,
    /// Mean episode return.
    Return,
}

impl EvalMetric {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMetric::Accuracy => "accuracy",
            EvalMetric::QueryLoss => "query_loss",
            EvalMetric::Return => "return",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub step: usize,
    pub mean: f64,
    pub ci_half_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub metric: EvalMetric,
    pub tasks: usize,
    /// Entry `k` summarises the metric after `k` adaptation steps.
    pub curve: Vec<StepSummary>,
}

impl EvalSummary {
    pub fn final_step(&self) -> &StepSummary {
        self.curve.last().expect("curve has step 0")
    }
}

/// Mean and 95% half-width `1.96 * s / sqrt(n)` with the `n - 1` sample
/// standard deviation. Identical values (or a single one) give half-width 0.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, 1.96 * math::sqrt(var) / math::sqrt(n as f64))
}

fn accuracy(spec: &MlpSpec, params: &[Tensor], x: &Tensor, labels: &[usize]) -> Result<f64, ModelError> {
    let logits = nn::forward_values(spec, params, x)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| {
            let row = logits.row_slice(*r);
            // first maximum wins, so uniform outputs predict class 0
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            best == l
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn mse(spec: &MlpSpec, params: &[Tensor], x: &Tensor, y: &Tensor) -> Result<f64, ModelError> {
    let p = nn::forward_values(spec, params, x)?;
    Ok(p.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.data().len() as f64)
}

/// Adapts from θ to each task with up to `grad_steps` first-order updates
/// and records the query metric after every step. Navigation task `i` draws
/// its episodes from stream `(TestTrajectories, i)` of `state.seed`; each
/// step's episodes are both scored and used for the next update.
pub fn evaluate_meta_test(
    state: &MetaState,
    spec: &MlpSpec,
    rule: &InnerRule,
    tasks: &[Task],
    grad_steps: usize,
    trajectories: usize,
) -> Result<EvalSummary, TrainError> {
    let metric = match tasks.first() {
        Some(Task::Classification(_)) | None => EvalMetric::Accuracy,
        Some(Task::Regression(_)) => EvalMetric::QueryLoss,
        Some(Task::Navigation(_)) => EvalMetric::Return,
    };
    let streams = SeedStreams::new(state.seed);
    let alpha_values = match &state.alphas {
        Some(a) => Some(a.unflatten(spec)?),
        None => None,
    };
    let scalar = match rule.kind {
        InnerKind::FixedStep(a) | InnerKind::MetaSgd(a) => a,
    };
    let theta = state.theta.unflatten(spec)?;
    let mut per_step: Vec<Vec<f64>> = (0..=grad_steps).map(|_| Vec::with_capacity(tasks.len())).collect();
    for (i, task) in tasks.iter().enumerate() {
        let mut rng = streams.rng(Stream::TestTrajectories, i as u64);
        let mut current = theta.clone();
        for (k, scores) in per_step.iter_mut().enumerate() {
            let (score, trajs) = match task {
                Task::Classification(t) => (accuracy(spec, &current, &t.query.features, &t.query.labels)?, None),
                Task::Regression(t) => (mse(spec, &current, &t.query_x, &t.query_y)?, None),
                Task::Navigation(nav) => {
                    let trajs = navigation::sample_trajectories(spec, &current, nav, trajectories, &mut rng)?;
                    (navigation::mean_return(&trajs), Some(trajs))
                }
            };
            scores.push(score);
            if k == grad_steps {
                break;
            }
            let mut tape = Tape::new();
            let leaves: Vec<Var> = current.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = match &trajs {
                Some(trajs) => navigation::policy_loss(&mut tape, spec, &leaves, trajs)?,
                None => supervised_loss(&mut tape, spec, &leaves, task, false)?,
            };
            let grads = tape.grad(loss, &leaves, GradMode::Detached)?;
            let alpha_vars: Option<Vec<Var>> = alpha_values
                .as_ref()
                .map(|a| a.iter().map(|t| tape.constant(t.clone())).collect());
            let alphas = match &alpha_vars {
                Some(a) => Alphas::PerParameter(a),
                None => Alphas::Scalar(scalar),
            };
            let next = descend(&mut tape, &leaves, &grads, alphas)?;
            current = values(&tape, &next);
        }
    }
    let curve = per_step
        .iter()
        .enumerate()
        .map(|(step, xs)| {
            let (mean, ci_half_width) = mean_ci(xs);
            StepSummary {
                step,
                mean,
                ci_half_width,
            }
        })
        .collect();
    Ok(EvalSummary {
        metric,
        tasks: tasks.len(),
        curve,
    })
}

/// Meta-test tasks for a run: `count` tasks from stream `(TestTasks, 0)`.
pub fn sample_test_tasks(distribution: &TaskDistribution, count: usize, seed: u64) -> Vec<Task> {
    sample_task_batch(
        distribution,
        count,
        &mut SeedStreams::new(seed).rng(Stream::TestTasks, 0),
    )
}
