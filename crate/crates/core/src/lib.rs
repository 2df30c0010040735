#![no_std]
// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Task-agnostic meta-learning on a self-contained second-order autodiff
//! engine.
//!
//! The crate is `no_std` with `alloc`. It holds the numerical pieces: the
//! differentiable [`autodiff::Tape`], MLP learners, inequality measures,
//! the meta-objectives, the MAML / Meta-SGD trainer and pure task
//! generators. File formats and the command line live in `taml-lab`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod inequality;
pub mod math;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use autodiff::{AutodiffError, GradMode, Gradients, OpKind, Tape, Var};
pub use tensor::{Shape, Tensor};
