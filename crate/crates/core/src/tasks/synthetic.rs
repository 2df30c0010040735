use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{standardize_columns, ClassificationTask, LabeledSet, TaskError};
use crate::tensor::Tensor;

/// Gaussian clusters around class centres drawn uniformly in `[-1, 1]^dim`.
///
/// Each task first picks a component of `difficulty_mix`, a list of
/// `(spread multiplier, weight)` pairs, so some tasks are intrinsically
/// harder than others.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub feature_dim: usize,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub cluster_spread: f64,
    pub difficulty_mix: Vec<(f64, f64)>,
}

impl SyntheticSpec {
    pub fn new(
        feature_dim: usize,
        ways: usize,
        shots: usize,
        queries: usize,
        cluster_spread: f64,
        difficulty_mix: Vec<(f64, f64)>,
    ) -> Result<Self, TaskError> {
        let bad = |why| Err(TaskError::InvalidSpec(why));
        if feature_dim == 0 || ways < 2 || shots == 0 || queries == 0 {
            return bad(format!(
                "need feature_dim >= 1, ways >= 2, shots >= 1, queries >= 1 (got {feature_dim}, {ways}, {shots}, {queries})"
            ));
        }
        if !(cluster_spread > 0.0) || !cluster_spread.is_finite() {
            return bad(format!("cluster_spread must be positive, got {cluster_spread}"));
        }
        if difficulty_mix.is_empty() {
            return bad("difficulty_mix is empty".into());
        }
        for &(s, w) in &difficulty_mix {
            if !(s > 0.0) || !(w > 0.0) || !s.is_finite() || !w.is_finite() {
                return bad(format!(
                    "difficulty_mix entry ({s}, {w}) must have positive spread and weight"
                ));
            }
        }
        let total: f64 = difficulty_mix.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("difficulty_mix weights sum to {total}, not 1"));
        }
        Ok(SyntheticSpec {
            feature_dim,
            ways,
            shots,
            queries,
            cluster_spread,
            difficulty_mix,
        })
    }

    fn pick_multiplier<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(s, w) in &self.difficulty_mix {
            acc += w;
            if u < acc {
                return s;
            }
        }
        self.difficulty_mix[self.difficulty_mix.len() - 1].0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassificationTask {
        let multiplier = self.pick_multiplier(rng);
        let spread = self.cluster_spread * multiplier;
        let d = self.feature_dim;
        let centers: Vec<f64> = (0..self.ways * d).map(|_| rng.random_range(-1.0..=1.0)).collect();

        let per_class = self.shots + self.queries;
        let n = self.ways * per_class;
        let mut all = Tensor::zeros(crate::tensor::Shape::new(n, d));
        let mut support_labels = Vec::with_capacity(self.ways * self.shots);
        let mut query_labels = Vec::with_capacity(self.ways * self.queries);
        // support rows first, then query rows, each class-major
        for class in 0..self.ways {
            for i in 0..per_class {
                let row = if i < self.shots {
                    support_labels.push(class);
                    class * self.shots + i
                } else {
                    query_labels.push(class);
                    self.ways * self.shots + class * self.queries + (i - self.shots)
                };
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    all.data_mut()[row * d + j] = centers[class * d + j] + spread * z;
                }
            }
        }
        standardize_columns(&mut all);

        let split = self.ways * self.shots * d;
        let data = all.into_data();
        let support = Tensor::from_vec(self.ways * self.shots, d, data[..split].to_vec()).expect("support layout");
        let query = Tensor::from_vec(self.ways * self.queries, d, data[split..].to_vec()).expect("query layout");
        ClassificationTask {
            support: LabeledSet {
                features: support,
                labels: support_labels,
            },
            query: LabeledSet {
                features: query,
                labels: query_labels,
            },
            ways: self.ways,
            shots: self.shots,
            difficulty: multiplier,
        }
    }
}
