use alloc::vec::Vec;

use super::{AutodiffError, Tape, Var};
use crate::math;
use crate::tensor::Tensor;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst `|a - n| / max(|a|, |n|, 1e-8)` over all elements.
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    /// Flat indices whose perturbed function values were not finite.
    pub non_finite: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.non_finite.is_empty() && self.max_relative_error <= tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    math::abs(a - b) / math::abs(a).max(math::abs(b)).max(1e-8)
}

/// Checks the gradient of the scalar function built by `f` at `params`.
///
/// `f` receives a fresh tape and one leaf per tensor in `params`, and must
/// return a scalar variable. It is called `1 + 2 * n` times for `n` scalar
/// parameters, so it has to be deterministic.
pub fn finite_difference_check<F, E>(mut f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(AutodiffError::InvalidStep.into());
    }
    let mut eval = |ps: &[Tensor]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut numeric = Vec::new();
    let mut non_finite = Vec::new();
    let mut work: Vec<Tensor> = params.to_vec();
    let mut flat = 0;
    for t in 0..work.len() {
        for e in 0..work[t].data().len() {
            let orig = work[t].data()[e];
            work[t].data_mut()[e] = orig + step;
            let up = eval(&work)?;
            work[t].data_mut()[e] = orig - step;
            let down = eval(&work)?;
            work[t].data_mut()[e] = orig;
            if !up.is_finite() || !down.is_finite() {
                non_finite.push(flat);
            }
            numeric.push((up - down) / (2.0 * step));
            flat += 1;
        }
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let analytic = tape.backward(out, &vars)?.values;

    let mut max_relative_error = 0.0;
    let mut worst_index = None;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n);
        if !a.is_finite() && !non_finite.contains(&i) {
            non_finite.push(i);
        }
        if err > max_relative_error || err.is_nan() {
            max_relative_error = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = Some(i);
        }
    }
    Ok(GradCheckReport {
        max_relative_error,
        worst_index,
        non_finite,
        analytic,
        numeric,
    })
}
