//! Task distributions: synthetic Gaussian-cluster classification, sinusoid
//! regression, episodes over a pool of labelled classes, and 2-D navigation.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::tensor::Tensor;

pub mod navigation;
pub mod pool;
pub mod sinusoid;
pub mod synthetic;

pub use navigation::{NavigationSpec, NavigationTask, Trajectory};
pub use pool::{ClassPool, EpisodeSpec};
pub use sinusoid::{RegressionTask, SinusoidSpec};
pub use synthetic::SyntheticSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum TaskError {
    InvalidSpec(String),
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskError::InvalidSpec(why) => write!(f, "invalid task distribution: {why}"),
        }
    }
}

impl core::error::Error for TaskError {}

/// Feature rows with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A K-shot N-way episode with a disjoint query set of Q examples per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationTask {
    pub support: LabeledSet,
    pub query: LabeledSet,
    pub ways: usize,
    pub shots: usize,
    /// Spread multiplier the task was drawn with; 1 for pool episodes.
    pub difficulty: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Classification(ClassificationTask),
    Regression(RegressionTask),
    Navigation(NavigationTask),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskDistribution {
    Synthetic(SyntheticSpec),
    Sinusoid(SinusoidSpec),
    Pool { pool: Arc<ClassPool>, episode: EpisodeSpec },
    Navigation(NavigationSpec),
}

impl TaskDistribution {
    /// Input width a model needs for tasks of this distribution.
    pub fn input_dim(&self) -> usize {
        match self {
            TaskDistribution::Synthetic(s) => s.feature_dim,
            TaskDistribution::Sinusoid(_) => 1,
            TaskDistribution::Pool { pool, .. } => pool.feature_dim(),
            TaskDistribution::Navigation(_) => 2,
        }
    }

    /// Output width a model needs for tasks of this distribution.
    pub fn output_dim(&self) -> usize {
        match self {
            TaskDistribution::Synthetic(s) => s.ways,
            TaskDistribution::Sinusoid(_) => 1,
            TaskDistribution::Pool { episode, .. } => episode.ways,
            TaskDistribution::Navigation(_) => 2,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, TaskDistribution::Synthetic(_) | TaskDistribution::Pool { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Task {
        match self {
            TaskDistribution::Synthetic(s) => Task::Classification(s.sample(rng)),
            TaskDistribution::Sinusoid(s) => Task::Regression(s.sample(rng)),
            TaskDistribution::Pool { pool, episode } => Task::Classification(pool.episode(episode, rng)),
            TaskDistribution::Navigation(s) => Task::Navigation(s.sample(rng)),
        }
    }
}

/// `m` independent tasks, drawn in order from `rng`.
pub fn sample_task_batch<R: Rng + ?Sized>(distribution: &TaskDistribution, m: usize, rng: &mut R) -> Vec<Task> {
    (0..m).map(|_| distribution.sample(rng)).collect()
}

/// Standardizes each column to zero mean and unit variance. Columns with no
/// spread are only centred.
pub(crate) fn standardize_columns(t: &mut Tensor) {
    let (rows, cols) = (t.rows(), t.cols());
    if rows == 0 {
        return;
    }
    let n = rows as f64;
    for c in 0..cols {
        let mean = (0..rows).map(|r| t.get(r, c)).sum::<f64>() / n;
        let var = (0..rows)
            .map(|r| (t.get(r, c) - mean) * (t.get(r, c) - mean))
            .sum::<f64>()
            / n;
        let sd = crate::math::sqrt(var);
        let inv = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        let data = t.data_mut();
        for r in 0..rows {
            data[r * cols + c] = (data[r * cols + c] - mean) * inv;
        }
    }
}
