//! Inequality measures over a batch of per-task losses.
//!
//! Each measure takes the losses as a `1 x M` row on the tape and returns a
//! differentiable scalar. Measures that need strictly positive inputs
//! (all but Gini, which only needs a positive total) see `max(loss, floor)`.

use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Theil,
    /// Generalized entropy index with the given exponent.
    GeneralizedEntropy(f64),
    /// Atkinson index with the given inequality aversion (>= 0).
    Atkinson(f64),
    Gini,
    VarianceOfLogarithms,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Theil => write!(f, "theil"),
            MeasureKind::GeneralizedEntropy(e) => write!(f, "ge({e})"),
            MeasureKind::Atkinson(a) => write!(f, "atkinson({a})"),
            MeasureKind::Gini => write!(f, "gini"),
            MeasureKind::VarianceOfLogarithms => write!(f, "vl"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureError {
    TooFewLosses(usize),
    NotARow(Shape),
    NonFinite,
    NegativeAversion(f64),
    /// Every loss is zero; Gini's denominator vanishes.
    AllZero,
    Autodiff(AutodiffError),
}

impl From<AutodiffError> for MeasureError {
    fn from(e: AutodiffError) -> Self {
        MeasureError::Autodiff(e)
    }
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::TooFewLosses(m) => write!(f, "inequality measures need at least 2 losses, got {m}"),
            MeasureError::NotARow(s) => write!(f, "losses must be a 1xM row, got {s}"),
            MeasureError::NonFinite => write!(f, "losses must be finite"),
            MeasureError::NegativeAversion(a) => write!(f, "Atkinson aversion must be >= 0, got {a}"),
            MeasureError::AllZero => write!(f, "all losses are zero"),
            MeasureError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MeasureError {}

/// Stacks scalar losses into the `1 x M` row the measures consume.
pub fn stack(tape: &mut Tape, losses: &[Var]) -> Result<Var, AutodiffError> {
    tape.concat_cols(losses)
}

fn validate(tape: &Tape, losses: Var) -> Result<(), MeasureError> {
    let s = losses.shape();
    if s.rows != 1 {
        return Err(MeasureError::NotARow(s));
    }
    if s.cols < 2 {
        return Err(MeasureError::TooFewLosses(s.cols));
    }
    if !tape.value(losses).is_finite() {
        return Err(MeasureError::NonFinite);
    }
    Ok(())
}

/// Floored losses, their mean, and the ratios `loss / mean`.
fn ratios(tape: &mut Tape, losses: Var, floor: f64) -> Result<(Var, Var, Var), MeasureError> {
    validate(tape, losses)?;
    let floored = tape.clamp_min(losses, floor)?;
    let mean = tape.mean(floored)?;
    let r = tape.div_broadcast(floored, mean)?;
    Ok((floored, mean, r))
}

fn theil_of_ratios(tape: &mut Tape, r: Var) -> Result<Var, AutodiffError> {
    let l = tape.ln(r)?;
    let t = tape.mul(r, l)?;
    tape.mean(t)
}

/// `(1/M) Σ (ℓᵢ/ℓ̄) ln(ℓᵢ/ℓ̄)`
pub fn theil(tape: &mut Tape, losses: Var, floor: f64) -> Result<Var, MeasureError> {
    let (_, _, r) = ratios(tape, losses, floor)?;
    Ok(theil_of_ratios(tape, r)?)
}

/// Generalized entropy index. Exponent 1 is Theil, exponent 0 is the mean
/// log deviation; the branch is chosen by exact comparison.
pub fn generalized_entropy(tape: &mut Tape, losses: Var, exponent: f64, floor: f64) -> Result<Var, MeasureError> {
    let (_, _, r) = ratios(tape, losses, floor)?;
    let v = if exponent == 1.0 {
        theil_of_ratios(tape, r)?
    } else if exponent == 0.0 {
        let l = tape.ln(r)?;
        let m = tape.mean(l)?;
        tape.neg(m)?
    } else {
        let p = tape.powf(r, exponent)?;
        let m = tape.mean(p)?;
        let d = tape.add_scalar(m, -1.0)?;
        tape.scale(d, 1.0 / (exponent * (exponent - 1.0)))?
    };
    Ok(v)
}

/// Atkinson index: one minus the ratio of the `1 - aversion` power mean
/// (geometric mean at aversion 1) to the arithmetic mean.
pub fn atkinson(tape: &mut Tape, losses: Var, aversion: f64, floor: f64) -> Result<Var, MeasureError> {
    if !(aversion >= 0.0) {
        return Err(MeasureError::NegativeAversion(aversion));
    }
    let (floored, mean, _) = ratios(tape, losses, floor)?;
    let equally_distributed = if aversion == 1.0 {
        let l = tape.ln(floored)?;
        let m = tape.mean(l)?;
        tape.exp(m)?
    } else {
        let p = tape.powf(floored, 1.0 - aversion)?;
        let m = tape.mean(p)?;
        tape.powf(m, 1.0 / (1.0 - aversion))?
    };
    let q = tape.div(equally_distributed, mean)?;
    let n = tape.neg(q)?;
    Ok(tape.add_scalar(n, 1.0)?)
}

/// `Σᵢ Σⱼ |ℓᵢ - ℓⱼ| / (2 M Σ ℓᵢ)`
pub fn gini(tape: &mut Tape, losses: Var, floor: f64) -> Result<Var, MeasureError> {
    validate(tape, losses)?;
    if tape.value(losses).data().iter().all(|&l| l <= 0.0) {
        return Err(MeasureError::AllZero);
    }
    let m = losses.shape().cols;
    let floored = tape.clamp_min(losses, floor)?;
    let col = tape.transpose(floored)?;
    let square = Shape::new(m, m);
    let a = tape.expand(floored, square)?;
    let b = tape.expand(col, square)?;
    let d = tape.sub(a, b)?;
    let d = tape.abs(d)?;
    let num = tape.sum(d)?;
    let total = tape.sum(floored)?;
    let den = tape.scale(total, 2.0 * m as f64)?;
    Ok(tape.div(num, den)?)
}

/// Population variance of `ln ℓᵢ`, i.e. mean squared deviation from the log
/// of the geometric mean.
pub fn variance_of_logarithms(tape: &mut Tape, losses: Var, floor: f64) -> Result<Var, MeasureError> {
    validate(tape, losses)?;
    let floored = tape.clamp_min(losses, floor)?;
    let logs = tape.ln(floored)?;
    let log_g = tape.mean(logs)?;
    let d = tape.sub_broadcast(logs, log_g)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq)?)
}

pub fn measure(tape: &mut Tape, kind: MeasureKind, losses: Var, floor: f64) -> Result<Var, MeasureError> {
    match kind {
        MeasureKind::Theil => theil(tape, losses, floor),
        MeasureKind::GeneralizedEntropy(e) => generalized_entropy(tape, losses, e, floor),
        MeasureKind::Atkinson(a) => atkinson(tape, losses, a, floor),
        MeasureKind::Gini => gini(tape, losses, floor),
        MeasureKind::VarianceOfLogarithms => variance_of_logarithms(tape, losses, floor),
    }
}

/// Evaluates a measure on plain numbers.
pub fn measure_values(kind: MeasureKind, losses: &[f64], floor: f64) -> Result<f64, MeasureError> {
    let mut tape = Tape::new();
    let row = tape.constant(Tensor::row(losses.to_vec()));
    let v = measure(&mut tape, kind, row, floor)?;
    Ok(tape.scalar(v))
}

/// The five measures at their common settings.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSummary {
    pub theil: f64,
    pub ge0: f64,
    pub ge1: f64,
    pub ge2: f64,
    pub atkinson1: f64,
    pub gini: f64,
    pub vl: f64,
}

pub fn summarize(losses: &[f64], floor: f64) -> Result<MeasureSummary, MeasureError> {
    let m = |k| measure_values(k, losses, floor);
    Ok(MeasureSummary {
        theil: m(MeasureKind::Theil)?,
        ge0: m(MeasureKind::GeneralizedEntropy(0.0))?,
        ge1: m(MeasureKind::GeneralizedEntropy(1.0))?,
        ge2: m(MeasureKind::GeneralizedEntropy(2.0))?,
        atkinson1: m(MeasureKind::Atkinson(1.0))?,
        gini: m(MeasureKind::Gini)?,
        vl: m(MeasureKind::VarianceOfLogarithms)?,
    })
}

/// Convenience for callers holding the losses as separate scalars.
pub fn measure_scalars(tape: &mut Tape, kind: MeasureKind, losses: &[Var], floor: f64) -> Result<Var, MeasureError> {
    if losses.len() < 2 {
        return Err(MeasureError::TooFewLosses(losses.len()));
    }
    let row = stack(tape, losses)?;
    measure(tape, kind, row, floor)
}

#[doc(hidden)]
pub fn all_kinds() -> Vec<MeasureKind> {
    alloc::vec![
        MeasureKind::Theil,
        MeasureKind::GeneralizedEntropy(0.0),
        MeasureKind::GeneralizedEntropy(1.0),
        MeasureKind::GeneralizedEntropy(2.0),
        MeasureKind::GeneralizedEntropy(-0.5),
        MeasureKind::Atkinson(0.5),
        MeasureKind::Atkinson(1.0),
        MeasureKind::Atkinson(2.0),
        MeasureKind::Gini,
        MeasureKind::VarianceOfLogarithms,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::math;
    use crate::rng::{SeedStreams, Stream};
    use alloc::vec;
    use rand::Rng;

    const F: f64 = DEFAULT_FLOOR;

    fn v(kind: MeasureKind, l: &[f64]) -> f64 {
        measure_values(kind, l, F).unwrap()
    }

    #[test]
    fn theil_examples() {
        assert!(v(MeasureKind::Theil, &[1.0, 1.0, 1.0, 1.0]).abs() < 1e-15);
        assert!((v(MeasureKind::Theil, &[1.0, 3.0]) - 0.130_812_035_941_136_97).abs() < 1e-15);
        let base = [0.4, 1.9, 0.05, 2.7];
        let scaled: Vec<f64> = base.iter().map(|x| 7.0 * x).collect();
        assert!((v(MeasureKind::Theil, &base) - v(MeasureKind::Theil, &scaled)).abs() < 1e-12);
        assert_eq!(
            measure_values(MeasureKind::Theil, &[1.0], F),
            Err(MeasureError::TooFewLosses(1))
        );
    }

    #[test]
    fn generalized_entropy_examples() {
        let x = [0.3, 2.2, 1.1, 0.9, 4.0];
        assert!((v(MeasureKind::GeneralizedEntropy(1.0), &x) - v(MeasureKind::Theil, &x)).abs() < 1e-12);
        assert!(v(MeasureKind::GeneralizedEntropy(0.0), &[1.0, 1.0]).abs() < 1e-15);
        assert!((v(MeasureKind::GeneralizedEntropy(2.0), &[1.0, 3.0]) - 0.125).abs() < 1e-15);
        assert!((v(MeasureKind::GeneralizedEntropy(0.0), &[1.0, 3.0]) - 0.143_841_036_225_890_45).abs() < 1e-15);
    }

    #[test]
    fn atkinson_examples() {
        assert!(v(MeasureKind::Atkinson(1.0), &[5.0, 5.0, 5.0]).abs() < 1e-15);
        assert!((v(MeasureKind::Atkinson(1.0), &[1.0, 4.0]) - 0.2).abs() < 1e-15);
        assert!((v(MeasureKind::Atkinson(0.5), &[1.0, 4.0]) - 0.1).abs() < 1e-15);
        assert!(v(MeasureKind::Atkinson(0.5), &[1.0, 1.0]).abs() < 1e-15);
        assert_eq!(
            measure_values(MeasureKind::Atkinson(-0.1), &[1.0, 2.0], F),
            Err(MeasureError::NegativeAversion(-0.1))
        );
    }

    /// Direct double loop over all ordered pairs.
    fn gini_brute_force(l: &[f64]) -> f64 {
        let l: Vec<f64> = l.iter().map(|&x| x.max(F)).collect();
        let m = l.len() as f64;
        let mut num = 0.0;
        for a in &l {
            for b in &l {
                num += (a - b).abs();
            }
        }
        num / (2.0 * m * l.iter().sum::<f64>())
    }

    #[test]
    fn gini_examples() {
        assert!(v(MeasureKind::Gini, &[2.0, 2.0, 2.0]).abs() < 1e-15);
        assert!((v(MeasureKind::Gini, &[0.0, 2.0]) - 0.499_999_995).abs() < 1e-12);
        assert_eq!(
            measure_values(MeasureKind::Gini, &[0.0, 0.0], F),
            Err(MeasureError::AllZero)
        );
        let mut rng = SeedStreams::new(5).rng(Stream::Tasks, 0);
        for _ in 0..200 {
            let l: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..5.0)).collect();
            assert!((v(MeasureKind::Gini, &l) - gini_brute_force(&l)).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_of_logarithms_examples() {
        let e = core::f64::consts::E;
        assert!(v(MeasureKind::VarianceOfLogarithms, &[e, e, e]).abs() < 1e-15);
        assert!((v(MeasureKind::VarianceOfLogarithms, &[1.0, e * e]) - 1.0).abs() < 1e-15);
        let x = [0.2, 3.0, 1.7];
        let y: Vec<f64> = x.iter().map(|a| 10.0 * a).collect();
        assert!((v(MeasureKind::VarianceOfLogarithms, &x) - v(MeasureKind::VarianceOfLogarithms, &y)).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        let mut tape = Tape::new();
        let col = tape.constant(Tensor::column(vec![1.0, 2.0]));
        assert_eq!(
            measure(&mut tape, MeasureKind::Theil, col, F),
            Err(MeasureError::NotARow(Shape::new(2, 1)))
        );
        assert_eq!(
            measure_values(MeasureKind::Gini, &[1.0, f64::NAN], F),
            Err(MeasureError::NonFinite)
        );
    }

    #[test]
    fn floor_keeps_zero_losses_defined() {
        for k in all_kinds() {
            let x = v(k, &[0.0, 1.0, 2.0]);
            assert!(x.is_finite() && x >= 0.0, "{k}: {x}");
        }
    }

    #[test]
    fn measure_dispatch_and_gradients() {
        assert!(v(MeasureKind::Theil, &[0.7; 5]).abs() < 1e-15);
        let losses = [Tensor::row(vec![0.4, 1.3, 2.2, 0.9, 3.1])];
        for k in all_kinds() {
            let r = finite_difference_check(|tape, vs| measure(tape, k, vs[0], F), &losses, 1e-5).unwrap();
            assert!(r.passed(1e-4), "{k}: {r:?}");
        }
    }

    #[test]
    fn measures_are_nonnegative_on_random_vectors() {
        let mut rng = SeedStreams::new(11).rng(Stream::Tasks, 0);
        for _ in 0..10_000 {
            let m = rng.random_range(2..10);
            let l: Vec<f64> = (0..m).map(|_| math::exp(rng.random_range(-4.0..3.0))).collect();
            for k in all_kinds() {
                assert!(v(k, &l) >= -1e-15, "{k} {l:?}");
            }
        }
    }

    fn primary_kinds() -> [MeasureKind; 5] {
        [
            MeasureKind::Theil,
            MeasureKind::GeneralizedEntropy(2.0),
            MeasureKind::Atkinson(0.5),
            MeasureKind::Gini,
            MeasureKind::VarianceOfLogarithms,
        ]
    }

    fn losses() -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..20.0, 2..12)
    }

    proptest::proptest! {
        #[test]
        fn zero_exactly_on_equal_losses(x in 0.01f64..50.0, m in 2usize..12) {
            for k in all_kinds() {
                proptest::prop_assert!(v(k, &vec![x; m]).abs() < 1e-12, "{}", k);
            }
        }

        #[test]
        fn positive_on_unequal_losses(l in losses()) {
            let spread = l.iter().cloned().fold(f64::MIN, f64::max) - l.iter().cloned().fold(f64::MAX, f64::min);
            proptest::prop_assume!(spread > 1e-3);
            for k in primary_kinds() {
                proptest::prop_assert!(v(k, &l) > 0.0, "{}", k);
            }
        }

        #[test]
        fn scale_invariant(l in losses(), ci in 0usize..3) {
            let c = [0.5, 2.0, 100.0][ci];
            let scaled: Vec<f64> = l.iter().map(|x| c * x).collect();
            for k in all_kinds() {
                let (a, b) = (v(k, &l), v(k, &scaled));
                proptest::prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{}: {} vs {}", k, a, b);
            }
        }

        #[test]
        fn transfer_to_poorer_reduces_inequality(l in losses(), frac in 0.01f64..0.49) {
            let (mut lo, mut hi) = (0, 0);
            for i in 0..l.len() {
                if l[i] < l[lo] { lo = i; }
                if l[i] > l[hi] { hi = i; }
            }
            proptest::prop_assume!(l[hi] - l[lo] > 1e-2);
            // moving less than half the gap keeps the order of the pair
            let d = frac * (l[hi] - l[lo]);
            let mut t = l.clone();
            t[hi] -= d;
            t[lo] += d;
            for k in [
                MeasureKind::Theil,
                MeasureKind::GeneralizedEntropy(0.0),
                MeasureKind::GeneralizedEntropy(2.0),
                MeasureKind::Atkinson(0.5),
                MeasureKind::Atkinson(2.0),
                MeasureKind::Gini,
            ] {
                proptest::prop_assert!(v(k, &t) < v(k, &l) + 1e-15, "{}", k);
            }
        }
    }
}
