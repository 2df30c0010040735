use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::TaskError;
use crate::math;
use crate::tensor::Tensor;

pub const AMPLITUDE_RANGE: (f64, f64) = (0.1, 5.0);
pub const PHASE_RANGE: (f64, f64) = (0.0, core::f64::consts::PI);
pub const INPUT_RANGE: (f64, f64) = (-5.0, 5.0);

/// Regression on `y = A sin(x + φ)`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SinusoidSpec {
    pub shots: usize,
    pub queries: usize,
}

impl SinusoidSpec {
    pub fn new(shots: usize, queries: usize) -> Result<Self, TaskError> {
        if shots == 0 || queries == 0 {
            return Err(TaskError::InvalidSpec(format!(
                "sinusoid needs shots and queries >= 1, got {shots} and {queries}"
            )));
        }
        Ok(SinusoidSpec { shots, queries })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RegressionTask {
        let amplitude = rng.random_range(AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1);
        let phase = rng.random_range(PHASE_RANGE.0..=PHASE_RANGE.1);
        let mut draw = |n: usize| {
            let xs: Vec<f64> = (0..n)
                .map(|_| rng.random_range(INPUT_RANGE.0..=INPUT_RANGE.1))
                .collect();
            let ys = xs.iter().map(|&x| sinusoid(amplitude, phase, x)).collect();
            (Tensor::column(xs), Tensor::column(ys))
        };
        let (support_x, support_y) = draw(self.shots);
        let (query_x, query_y) = draw(self.queries);
        RegressionTask {
            support_x,
            support_y,
            query_x,
            query_y,
            amplitude,
            phase,
        }
    }
}

pub fn sinusoid(amplitude: f64, phase: f64, x: f64) -> f64 {
    amplitude * math::sin(x + phase)
}

/// Inputs and targets are `n x 1` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTask {
    pub support_x: Tensor,
    pub support_y: Tensor,
    pub query_x: Tensor,
    pub query_y: Tensor,
    pub amplitude: f64,
    pub phase: f64,
}
