//! JSON records written by a run: one `metrics.jsonl` line per
//! meta-iteration and a final `summary.json`.

use serde::{Deserialize, Serialize};
use taml_core::trainer::{EvalSummary, IterationMetrics, StepSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub iteration: u64,
    pub mean_pre_loss: f64,
    pub mean_post_loss: f64,
    pub regularizer_value: f64,
    pub pre_loss_theil: Option<f64>,
    pub grad_norm: f64,
    /// Milliseconds spent on the iteration; `null` unless `timing = true`,
    /// which keeps the file byte-identical across reruns by default.
    pub wall_ms: Option<f64>,
}

impl MetricsLine {
    pub fn new(m: &IterationMetrics, wall_ms: Option<f64>) -> Self {
        MetricsLine {
            iteration: m.iteration,
            mean_pre_loss: m.mean_pre_loss,
            mean_post_loss: m.mean_post_loss,
            regularizer_value: m.regularizer_value,
            pre_loss_theil: m.pre_loss_theil,
            grad_norm: m.grad_norm,
            wall_ms,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub ci_half_width: f64,
}

impl From<&StepSummary> for CurvePoint {
    fn from(s: &StepSummary) -> Self {
        CurvePoint {
            step: s.step,
            mean: s.mean,
            ci_half_width: s.ci_half_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaTest {
    pub metric: String,
    pub tasks: usize,
    pub curve: Vec<CurvePoint>,
}

impl From<&EvalSummary> for MetaTest {
    fn from(s: &EvalSummary) -> Self {
        MetaTest {
            metric: s.metric.name().to_string(),
            tasks: s.tasks,
            curve: s.curve.iter().map(CurvePoint::from).collect(),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub train_ms: f64,
    pub eval_ms: f64,
    pub total_ms: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: Status,
    pub error: Option<String>,
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub iterations_completed: u64,
    pub config: String,
    pub metrics: String,
    pub checkpoints: Vec<String>,
    pub meta_test: Option<MetaTest>,
    pub wall_clock: WallClock,
}
