//! Point-mass navigation in the plane: start at the origin, reach a goal in
//! the unit square. Reward is the negative distance to the goal after each
//! move.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::TaskError;
use crate::autodiff::{Tape, Var};
use crate::math;
use crate::nn::{self, Head, MlpSpec, ModelError};
use crate::tensor::Tensor;

pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_ACTION_CLIP: f64 = 0.1;
pub const DEFAULT_GOAL_RADIUS: f64 = 0.01;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NavigationSpec {
    pub horizon: usize,
    pub action_clip: f64,
    pub goal_radius: f64,
}

impl Default for NavigationSpec {
    fn default() -> Self {
        NavigationSpec {
            horizon: DEFAULT_HORIZON,
            action_clip: DEFAULT_ACTION_CLIP,
            goal_radius: DEFAULT_GOAL_RADIUS,
        }
    }
}

impl NavigationSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.horizon == 0 || !(self.action_clip > 0.0) || !(self.goal_radius >= 0.0) {
            return Err(TaskError::InvalidSpec(format!(
                "navigation needs horizon >= 1, action_clip > 0, goal_radius >= 0 (got {}, {}, {})",
                self.horizon, self.action_clip, self.goal_radius
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NavigationTask {
        let goal = [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)];
        self.task(goal)
    }

    pub fn task(&self, goal: [f64; 2]) -> NavigationTask {
        NavigationTask {
            goal,
            horizon: self.horizon,
            action_clip: self.action_clip,
            goal_radius: self.goal_radius,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NavigationTask {
    pub goal: [f64; 2],
    pub horizon: usize,
    pub action_clip: f64,
    pub goal_radius: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Step {
    pub next: [f64; 2],
    pub reward: f64,
    /// Within `goal_radius` of the goal. Reaching the horizon is tracked by
    /// the caller.
    pub reached: bool,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    math::sqrt(dx * dx + dy * dy)
}

pub fn navigation_step(task: &NavigationTask, state: [f64; 2], action: [f64; 2]) -> Step {
    let c = task.action_clip;
    let next = [state[0] + action[0].clamp(-c, c), state[1] + action[1].clamp(-c, c)];
    let d = distance(next, task.goal);
    Step {
        next,
        reward: -d,
        reached: d <= task.goal_radius,
    }
}

/// One episode. `states[t]` is where `actions[t]` was taken; actions are
/// stored unclipped, as sampled from the policy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 2]>,
    pub actions: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

pub fn mean_return(trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / trajectories.len() as f64
}

/// Runs `count` episodes from the origin. `mean_action` maps a batch of
/// states (`n x 2`) to mean actions (`n x 2`); actions add isotropic
/// Gaussian noise of `stddev`.
pub fn rollout<R, F>(
    task: &NavigationTask,
    count: usize,
    stddev: f64,
    rng: &mut R,
    mut mean_action: F,
) -> Vec<Trajectory>
where
    R: Rng + ?Sized,
    F: FnMut(&Tensor) -> Tensor,
{
    let mut trajs: Vec<Trajectory> = (0..count).map(|_| Trajectory::default()).collect();
    let mut states = alloc::vec![[0.0f64; 2]; count];
    let mut active: Vec<usize> = (0..count).collect();
    for _ in 0..task.horizon {
        if active.is_empty() {
            break;
        }
        let batch: Vec<f64> = active.iter().flat_map(|&i| states[i]).collect();
        let means = mean_action(&Tensor::from_vec(active.len(), 2, batch).expect("state batch"));
        let mut still = Vec::with_capacity(active.len());
        for (row, &i) in active.iter().enumerate() {
            let mut a = [means.get(row, 0), means.get(row, 1)];
            for x in &mut a {
                let z: f64 = rng.sample(StandardNormal);
                *x += stddev * z;
            }
            let step = navigation_step(task, states[i], a);
            trajs[i].states.push(states[i]);
            trajs[i].actions.push(a);
            trajs[i].rewards.push(step.reward);
            states[i] = step.next;
            if !step.reached {
                still.push(i);
            }
        }
        active = still;
    }
    trajs
}

fn policy_stddev(spec: &MlpSpec) -> Result<f64, ModelError> {
    match spec.head() {
        Head::GaussianPolicy { stddev } => Ok(stddev),
        _ => Err(ModelError::InvalidSpec(
            "navigation needs a Gaussian policy head".into(),
        )),
    }
}

/// Samples `count` episodes with the Gaussian policy `params`.
pub fn sample_trajectories<R: Rng + ?Sized>(
    spec: &MlpSpec,
    params: &[Tensor],
    task: &NavigationTask,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>, ModelError> {
    let stddev = policy_stddev(spec)?;
    if spec.input_dim() != 2 || spec.output_dim() != 2 {
        return Err(ModelError::InvalidSpec(
            "navigation policies map 2-D states to 2-D actions".into(),
        ));
    }
    let mut err = None;
    let trajs = rollout(task, count, stddev, rng, |s| {
        match nn::forward_values(spec, params, s) {
            Ok(m) => m,
            Err(e) => {
                err.get_or_insert(e);
                Tensor::zeros(s.shape())
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(trajs),
    }
}

/// Mean action of the straight-line policy: head for the goal at full speed.
pub fn oracle_action(task: &NavigationTask, states: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(states.shape());
    for r in 0..states.rows() {
        for c in 0..2 {
            out.data_mut()[r * 2 + c] = task.goal[c] - states.get(r, c);
        }
    }
    out
}

/// REINFORCE surrogate: mean over trajectories of
/// `-(Σ_t log π(a_t | x_t)) * (return - baseline)`, with the batch mean
/// return as baseline. Its gradient is the vanilla policy gradient of the
/// negative expected return.
pub fn policy_gradient_surrogate(
    tape: &mut Tape,
    spec: &MlpSpec,
    params: &[Var],
    trajectories: &[Trajectory],
) -> Result<Var, ModelError> {
    let stddev = policy_stddev(spec)?;
    if trajectories.is_empty() {
        return Err(ModelError::InvalidSpec(
            "policy gradient needs at least one trajectory".into(),
        ));
    }
    let baseline = mean_return(trajectories);
    let n = trajectories.len() as f64;
    let steps: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut states = Vec::with_capacity(2 * steps);
    let mut actions = Vec::with_capacity(2 * steps);
    let mut weights = Vec::with_capacity(steps);
    for t in trajectories {
        let w = -(t.total_reward() - baseline) / n;
        for k in 0..t.len() {
            states.extend_from_slice(&t.states[k]);
            actions.extend_from_slice(&t.actions[k]);
            weights.push(w);
        }
    }
    let states = tape.constant(Tensor::from_vec(steps, 2, states).expect("states"));
    let actions = tape.constant(Tensor::from_vec(steps, 2, actions).expect("actions"));
    let weights = tape.constant(Tensor::column(weights));
    let mean = nn::forward(tape, spec, params, states)?;
    let logp = nn::gaussian_log_prob(tape, mean, stddev, actions)?;
    let weighted = tape.mul(logp, weights)?;
    Ok(tape.sum(weighted)?)
}

/// The surrogate shifted by a constant so its value is the negative mean
/// return of `trajectories`; the gradient is unchanged.
pub fn policy_loss(
    tape: &mut Tape,
    spec: &MlpSpec,
    params: &[Var],
    trajectories: &[Trajectory],
) -> Result<Var, ModelError> {
    let s = policy_gradient_surrogate(tape, spec, params, trajectories)?;
    let shift = -mean_return(trajectories) - tape.scalar(s);
    Ok(tape.add_scalar(s, shift)?)
}
