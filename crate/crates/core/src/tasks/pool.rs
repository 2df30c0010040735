use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::{ClassificationTask, LabeledSet, TaskError};
use crate::tensor::{Shape, Tensor};

/// Labelled examples grouped by class, all with the same feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPool {
    feature_dim: usize,
    classes: Vec<Vec<Vec<f64>>>,
}

impl ClassPool {
    pub fn new(feature_dim: usize, classes: Vec<Vec<Vec<f64>>>) -> Result<Self, TaskError> {
        if feature_dim == 0 {
            return Err(TaskError::InvalidSpec("feature_dim must be >= 1".into()));
        }
        for (c, instances) in classes.iter().enumerate() {
            if instances.is_empty() {
                return Err(TaskError::InvalidSpec(format!("class {c} has no instances")));
            }
            if let Some(bad) = instances.iter().find(|x| x.len() != feature_dim) {
                return Err(TaskError::InvalidSpec(format!(
                    "class {c} has an instance of width {}, expected {feature_dim}",
                    bad.len()
                )));
            }
        }
        Ok(ClassPool { feature_dim, classes })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn instances(&self, class: usize) -> &[Vec<f64>] {
        &self.classes[class]
    }

    /// Checks that `episode` can be drawn from this pool.
    pub fn check(&self, episode: &EpisodeSpec) -> Result<(), TaskError> {
        if episode.ways < 2 || episode.shots == 0 || episode.queries == 0 {
            return Err(TaskError::InvalidSpec(
                "episodes need ways >= 2, shots >= 1, queries >= 1".into(),
            ));
        }
        if self.classes.len() < episode.ways {
            return Err(TaskError::InvalidSpec(format!(
                "{}-way episodes need at least {} classes, pool has {}",
                episode.ways,
                episode.ways,
                self.classes.len()
            )));
        }
        let need = episode.shots + episode.queries;
        if let Some(c) = self.classes.iter().position(|c| c.len() < need) {
            return Err(TaskError::InvalidSpec(format!(
                "class {c} has {} instances, episodes need {need}",
                self.classes[c].len()
            )));
        }
        Ok(())
    }

    /// Draws `ways` distinct classes and disjoint support and query
    /// instances. Label `i` is the `i`-th class drawn. Assumes
    /// [`ClassPool::check`] passed.
    pub fn episode<R: Rng + ?Sized>(&self, spec: &EpisodeSpec, rng: &mut R) -> ClassificationTask {
        let d = self.feature_dim;
        let classes = index::sample(rng, self.classes.len(), spec.ways).into_vec();
        let mut support = Vec::with_capacity(spec.ways * spec.shots * d);
        let mut query = Vec::with_capacity(spec.ways * spec.queries * d);
        let (mut sl, mut ql) = (Vec::new(), Vec::new());
        for (label, &c) in classes.iter().enumerate() {
            let pick = index::sample(rng, self.classes[c].len(), spec.shots + spec.queries).into_vec();
            for (i, &k) in pick.iter().enumerate() {
                if i < spec.shots {
                    support.extend_from_slice(&self.classes[c][k]);
                    sl.push(label);
                } else {
                    query.extend_from_slice(&self.classes[c][k]);
                    ql.push(label);
                }
            }
        }
        let tensor = |rows, data| Tensor::from_vec(rows, d, data).unwrap_or_else(|| Tensor::zeros(Shape::new(0, d)));
        ClassificationTask {
            support: LabeledSet {
                features: tensor(sl.len(), support),
                labels: sl,
            },
            query: LabeledSet {
                features: tensor(ql.len(), query),
                labels: ql,
            },
            ways: spec.ways,
            shots: spec.shots,
            difficulty: 1.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}
