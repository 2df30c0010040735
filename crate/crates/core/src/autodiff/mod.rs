//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every operation appends a node holding its primal value. The reverse
//! sweep is itself expressed with tape operations, so a gradient obtained
//! with [`GradMode::Graph`] is an ordinary differentiable [`Var`] and can be
//! differentiated again. That is all a second-order meta-gradient needs.

mod gradcheck;

pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::tensor::{Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    shape: Shape,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
}

/// The differentiable operations a tape can record.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Exp,
    Ln,
    /// `x` for positive inputs, `slope * x` otherwise. `slope = 0` is ReLU.
    LeakyRelu {
        slope: f64,
    },
    Sum,
    /// `r x c -> 1 x c`
    SumRows,
    /// `r x c -> r x 1`
    SumCols,
    Mean,
    Abs,
    /// `max(x, min)`; the gradient is zero where the floor is active.
    ClampMin {
        min: f64,
    },
    Powf {
        exponent: f64,
    },
    Scale {
        factor: f64,
    },
    AddScalar {
        value: f64,
    },
    Transpose,
    Expand {
        rows: usize,
        cols: usize,
    },
    ConcatCols,
    SliceCols {
        start: usize,
        len: usize,
    },
    PadCols {
        start: usize,
        total: usize,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::MatMul => "matmul",
            OpKind::Exp => "exp",
            OpKind::Ln => "ln",
            OpKind::LeakyRelu { .. } => "leaky_relu",
            OpKind::Sum => "sum",
            OpKind::SumRows => "sum_rows",
            OpKind::SumCols => "sum_cols",
            OpKind::Mean => "mean",
            OpKind::Abs => "abs",
            OpKind::ClampMin { .. } => "clamp_min",
            OpKind::Powf { .. } => "powf",
            OpKind::Scale { .. } => "scale",
            OpKind::AddScalar { .. } => "add_scalar",
            OpKind::Transpose => "transpose",
            OpKind::Expand { .. } => "expand",
            OpKind::ConcatCols => "concat_cols",
            OpKind::SliceCols { .. } => "slice_cols",
            OpKind::PadCols { .. } => "pad_cols",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AutodiffError {
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Shape>,
    },
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    UnknownVar {
        id: usize,
    },
    NonScalarLoss {
        shape: Shape,
    },
    /// `backward_through_gradient` was asked for on a tape where no
    /// gradient was recorded with [`GradMode::Graph`].
    NoGradientGraph,
    InvalidStep,
}

impl fmt::Display for AutodiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutodiffError::ShapeMismatch { op, shapes } => {
                write!(f, "{op}: incompatible shapes")?;
                for (i, s) in shapes.iter().enumerate() {
                    write!(f, "{}{s}", if i == 0 { " " } else { ", " })?;
                }
                Ok(())
            }
            AutodiffError::Arity { op, expected, got } => {
                write!(f, "{op}: expected {expected} inputs, got {got}")
            }
            AutodiffError::UnknownVar { id } => write!(f, "variable {id} is not on this tape"),
            AutodiffError::NonScalarLoss { shape } => {
                write!(f, "loss must be a 1x1 scalar, got {shape}")
            }
            AutodiffError::NoGradientGraph => write!(
                f,
                "tape holds no differentiable gradient nodes; compute the inner gradient with GradMode::Graph"
            ),
            AutodiffError::InvalidStep => write!(f, "finite-difference step must be positive"),
        }
    }
}

impl core::error::Error for AutodiffError {}

/// How [`Tape::grad`] records the reverse sweep.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Gradients stay on the tape and can be differentiated again.
    Graph,
    /// Gradients are returned as constants (stop-gradient).
    Detached,
}

#[derive(Clone, Debug)]
enum Source {
    Leaf,
    Constant,
    Op(OpKind, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    source: Source,
    value: Tensor,
    requires_grad: bool,
}

/// Flat gradient aligned with the variables it was taken against.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
    /// Indices into `wrt` that were not on the tape or not differentiable;
    /// their entries in `values` are zero.
    pub untracked: Vec<usize>,
}

impl Gradients {
    pub fn has_warning(&self) -> bool {
        !self.untracked.is_empty()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.values.iter().map(|g| g * g).sum())
    }
}

/// A single-writer record of operations. Node ids are topologically ordered.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    graph_gradients: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, source: Source, value: Tensor, requires_grad: bool) -> Var {
        let shape = value.shape();
        self.nodes.push(Node {
            source,
            value,
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            shape,
        }
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Source::Leaf, value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Source::Constant, value, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.get(v.id).is_some_and(|n| n.requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id].value
    }

    /// Primal of a scalar variable.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.id].value.item()
    }

    /// Whether some gradient on this tape was recorded with [`GradMode::Graph`].
    pub fn has_gradient_graph(&self) -> bool {
        self.graph_gradients
    }

    fn check(&self, v: Var) -> Result<(), AutodiffError> {
        match self.nodes.get(v.id) {
            Some(n) if n.value.shape() == v.shape => Ok(()),
            _ => Err(AutodiffError::UnknownVar { id: v.id }),
        }
    }

    /// Appends `op` applied to `inputs`, caching the primal.
    pub fn record(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        for &v in inputs {
            self.check(v)?;
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.id].value).collect();
        let value = evaluate(op, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.id].requires_grad);
        let ids = inputs.iter().map(|v| v.id).collect();
        Ok(self.push(Source::Op(op, ids), value, requires_grad))
    }

    /// A constant copy of `v`'s current value; gradients do not flow through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.id].value.clone();
        self.constant(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Div, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::MatMul, &[a, b])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Exp, &[a])
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Ln, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::LeakyRelu { slope }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Sum, &[a])
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::SumRows, &[a])
    }

    pub fn sum_cols(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::SumCols, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Mean, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Abs, &[a])
    }

    pub fn clamp_min(&mut self, a: Var, min: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::ClampMin { min }, &[a])
    }

    pub fn powf(&mut self, a: Var, exponent: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::Powf { exponent }, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::Scale { factor }, &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, value: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::AddScalar { value }, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Transpose, &[a])
    }

    pub fn expand(&mut self, a: Var, shape: Shape) -> Result<Var, AutodiffError> {
        self.record(
            OpKind::Expand {
                rows: shape.rows,
                cols: shape.cols,
            },
            &[a],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.record(OpKind::ConcatCols, parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.record(OpKind::SliceCols { start, len }, &[a])
    }

    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var, AutodiffError> {
        self.record(OpKind::PadCols { start, total }, &[a])
    }

    /// `a + expand(b)`, with `b` broadcast to `a`'s shape.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let b = self.expand_to(b, a.shape)?;
        self.add(a, b)
    }

    pub fn sub_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let b = self.expand_to(b, a.shape)?;
        self.sub(a, b)
    }

    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let b = self.expand_to(b, a.shape)?;
        self.mul(a, b)
    }

    pub fn div_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let b = self.expand_to(b, a.shape)?;
        self.div(a, b)
    }

    fn expand_to(&mut self, v: Var, shape: Shape) -> Result<Var, AutodiffError> {
        if v.shape == shape {
            Ok(v)
        } else {
            self.expand(v, shape)
        }
    }

    /// Reduces `g` (shaped like an expanded value) back to `target`.
    fn reduce_to(&mut self, g: Var, target: Shape) -> Result<Var, AutodiffError> {
        let mut g = g;
        if target.rows == 1 && g.shape.rows != 1 {
            g = self.sum_rows(g)?;
        }
        if target.cols == 1 && g.shape.cols != 1 {
            g = self.sum_cols(g)?;
        }
        Ok(g)
    }

    /// Gradients of the scalar `loss` w.r.t. each of `wrt`.
    ///
    /// With [`GradMode::Graph`] the reverse sweep stays on the tape and the
    /// returned variables are differentiable functions of the inputs.
    /// With [`GradMode::Detached`] the sweep is discarded and the results are
    /// constants. Variables in `wrt` that the loss does not depend on get a
    /// zero constant.
    pub fn grad(&mut self, loss: Var, wrt: &[Var], mode: GradMode) -> Result<Vec<Var>, AutodiffError> {
        self.check(loss)?;
        if !loss.shape.is_scalar() {
            return Err(AutodiffError::NonScalarLoss { shape: loss.shape });
        }
        let mark = self.nodes.len();
        let adjoints = self.reverse_sweep(loss)?;
        match mode {
            GradMode::Graph => {
                self.graph_gradients = true;
                let mut out = Vec::with_capacity(wrt.len());
                for &w in wrt {
                    let g = match adjoints.get(w.id).copied().flatten() {
                        Some(g) if w.shape == g.shape => g,
                        _ => self.constant(Tensor::zeros(w.shape)),
                    };
                    out.push(g);
                }
                Ok(out)
            }
            GradMode::Detached => {
                let values: Vec<Tensor> = wrt
                    .iter()
                    .map(|w| match adjoints.get(w.id).copied().flatten() {
                        Some(g) => self.nodes[g.id].value.clone(),
                        None => Tensor::zeros(w.shape),
                    })
                    .collect();
                self.nodes.truncate(mark);
                Ok(values.into_iter().map(|t| self.constant(t)).collect())
            }
        }
    }

    /// Flat gradient of `loss` w.r.t. `wrt`, concatenated in order. The
    /// tape is left as it was.
    pub fn backward(&mut self, loss: Var, wrt: &[Var]) -> Result<Gradients, AutodiffError> {
        self.check(loss)?;
        if !loss.shape.is_scalar() {
            return Err(AutodiffError::NonScalarLoss { shape: loss.shape });
        }
        let mark = self.nodes.len();
        let adjoints = self.reverse_sweep(loss)?;
        let mut values = Vec::new();
        let mut untracked = Vec::new();
        for (i, w) in wrt.iter().enumerate() {
            let tracked = self.check(*w).is_ok() && self.nodes[w.id].requires_grad;
            match adjoints.get(w.id).copied().flatten() {
                Some(g) if tracked => values.extend_from_slice(self.nodes[g.id].value.data()),
                _ => {
                    if !tracked {
                        untracked.push(i);
                    }
                    values.extend(core::iter::repeat_n(0.0, w.shape.len()));
                }
            }
        }
        self.nodes.truncate(mark);
        Ok(Gradients { values, untracked })
    }

    /// Like [`Tape::backward`], for an outer loss that depends on inner
    /// gradients recorded with [`GradMode::Graph`]. The result contains the
    /// terms through the inner gradient (the full second-order gradient).
    pub fn backward_through_gradient(&mut self, outer_loss: Var, wrt: &[Var]) -> Result<Gradients, AutodiffError> {
        if !self.graph_gradients {
            return Err(AutodiffError::NoGradientGraph);
        }
        self.backward(outer_loss, wrt)
    }

    fn reverse_sweep(&mut self, loss: Var) -> Result<Vec<Option<Var>>, AutodiffError> {
        let n = loss.id + 1;
        let mut adj: Vec<Option<Var>> = vec![None; n];
        adj[loss.id] = Some(self.constant(Tensor::scalar(1.0)));
        for id in (0..n).rev() {
            let Some(g) = adj[id] else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let (op, inputs) = match &self.nodes[id].source {
                Source::Op(op, inputs) => (*op, inputs.clone()),
                _ => continue,
            };
            let out = Var {
                id,
                shape: self.nodes[id].value.shape(),
            };
            let ins: Vec<Var> = inputs
                .iter()
                .map(|&i| Var {
                    id: i,
                    shape: self.nodes[i].value.shape(),
                })
                .collect();
            let grads = self.vjp(op, &ins, out, g)?;
            for (input, gi) in ins.iter().zip(grads) {
                let Some(gi) = gi else { continue };
                if !self.nodes[input.id].requires_grad {
                    continue;
                }
                adj[input.id] = Some(match adj[input.id] {
                    None => gi,
                    Some(prev) => self.add(prev, gi)?,
                });
            }
        }
        Ok(adj)
    }

    /// Vector-Jacobian products of one node, recorded as tape operations.
    fn vjp(&mut self, op: OpKind, ins: &[Var], out: Var, g: Var) -> Result<Vec<Option<Var>>, AutodiffError> {
        let needs = |t: &Tape, i: usize| t.nodes[ins[i].id].requires_grad;
        let grads = match op {
            OpKind::Add => vec![Some(g), Some(g)],
            OpKind::Sub => {
                let gb = if needs(self, 1) { Some(self.neg(g)?) } else { None };
                vec![Some(g), gb]
            }
            OpKind::Mul => {
                let ga = if needs(self, 0) {
                    Some(self.mul(g, ins[1])?)
                } else {
                    None
                };
                let gb = if needs(self, 1) {
                    Some(self.mul(g, ins[0])?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            OpKind::Div => {
                let ga = self.div(g, ins[1])?;
                let gb = if needs(self, 1) {
                    let t = self.mul(ga, out)?;
                    Some(self.neg(t)?)
                } else {
                    None
                };
                vec![Some(ga), gb]
            }
            OpKind::MatMul => {
                let ga = if needs(self, 0) {
                    let bt = self.transpose(ins[1])?;
                    Some(self.matmul(g, bt)?)
                } else {
                    None
                };
                let gb = if needs(self, 1) {
                    let at = self.transpose(ins[0])?;
                    Some(self.matmul(at, g)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            OpKind::Exp => vec![Some(self.mul(g, out)?)],
            OpKind::Ln => vec![Some(self.div(g, ins[0])?)],
            OpKind::LeakyRelu { slope } => {
                let mask = self.nodes[ins[0].id].value.map(|x| if x > 0.0 { 1.0 } else { slope });
                let mask = self.constant(mask);
                vec![Some(self.mul(g, mask)?)]
            }
            OpKind::Sum | OpKind::SumRows | OpKind::SumCols => {
                vec![Some(self.expand(g, ins[0].shape)?)]
            }
            OpKind::Mean => {
                let n = ins[0].shape.len() as f64;
                let e = self.expand(g, ins[0].shape)?;
                vec![Some(self.scale(e, 1.0 / n)?)]
            }
            OpKind::Abs => {
                // subgradient 0 at the kink
                let sign = self.nodes[ins[0].id].value.map(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                let sign = self.constant(sign);
                vec![Some(self.mul(g, sign)?)]
            }
            OpKind::ClampMin { min } => {
                let mask = self.nodes[ins[0].id].value.map(|x| if x > min { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                vec![Some(self.mul(g, mask)?)]
            }
            OpKind::Powf { exponent } => {
                let d = if exponent == 1.0 {
                    g
                } else {
                    let p = self.powf(ins[0], exponent - 1.0)?;
                    let p = self.scale(p, exponent)?;
                    self.mul(g, p)?
                };
                vec![Some(d)]
            }
            OpKind::Scale { factor } => vec![Some(self.scale(g, factor)?)],
            OpKind::AddScalar { .. } => vec![Some(g)],
            OpKind::Transpose => vec![Some(self.transpose(g)?)],
            OpKind::Expand { .. } => vec![Some(self.reduce_to(g, ins[0].shape)?)],
            OpKind::ConcatCols => {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(ins.len());
                for (i, v) in ins.iter().enumerate() {
                    let c = v.shape.cols;
                    grads.push(if needs(self, i) {
                        Some(self.slice_cols(g, offset, c)?)
                    } else {
                        None
                    });
                    offset += c;
                }
                grads
            }
            OpKind::SliceCols { start, .. } => {
                vec![Some(self.pad_cols(g, start, ins[0].shape.cols)?)]
            }
            OpKind::PadCols { start, .. } => {
                vec![Some(self.slice_cols(g, start, ins[0].shape.cols)?)]
            }
        };
        Ok(grads)
    }

    /// Recomputes every node from its inputs' cached values.
    pub fn replay(&self) -> Result<Vec<Tensor>, AutodiffError> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.source {
                Source::Leaf | Source::Constant => node.value.clone(),
                Source::Op(op, inputs) => {
                    let args: Vec<&Tensor> = inputs.iter().map(|&i| &values[i]).collect();
                    evaluate(*op, &args)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True when every input id precedes its node and a forward replay
    /// reproduces every cached primal bit for bit.
    pub fn verify(&self) -> bool {
        let ordered = self.nodes.iter().enumerate().all(|(id, n)| match &n.source {
            Source::Op(_, inputs) => inputs.iter().all(|&i| i < id),
            _ => true,
        });
        ordered
            && self.replay().is_ok_and(|vals| {
                vals.iter().zip(&self.nodes).all(|(v, n)| {
                    v.shape() == n.value.shape()
                        && v.data()
                            .iter()
                            .zip(n.value.data())
                            .all(|(a, b)| a.to_bits() == b.to_bits())
                })
            })
    }
}

fn mismatch(op: OpKind, values: &[&Tensor]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op: op.name(),
        shapes: values.iter().map(|t| t.shape()).collect(),
    }
}

fn evaluate(op: OpKind, values: &[&Tensor]) -> Result<Tensor, AutodiffError> {
    let arity = match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::MatMul => 2,
        OpKind::ConcatCols => values.len().max(1),
        _ => 1,
    };
    if values.len() != arity {
        return Err(AutodiffError::Arity {
            op: op.name(),
            expected: arity,
            got: values.len(),
        });
    }
    let a = values[0];
    let same = |f: fn(f64, f64) -> f64| {
        if a.shape() == values[1].shape() {
            Ok(a.zip_map(values[1], f))
        } else {
            Err(mismatch(op, values))
        }
    };
    match op {
        OpKind::Add => same(|x, y| x + y),
        OpKind::Sub => same(|x, y| x - y),
        OpKind::Mul => same(|x, y| x * y),
        OpKind::Div => same(|x, y| x / y),
        OpKind::MatMul => {
            if a.cols() == values[1].rows() {
                Ok(a.matmul(values[1]))
            } else {
                Err(mismatch(op, values))
            }
        }
        OpKind::Exp => Ok(a.map(math::exp)),
        OpKind::Ln => Ok(a.map(math::ln)),
        OpKind::LeakyRelu { slope } => Ok(a.map(|x| if x > 0.0 { x } else { slope * x })),
        OpKind::Sum => Ok(Tensor::scalar(a.sum())),
        OpKind::SumRows => Ok(a.sum_rows()),
        OpKind::SumCols => Ok(a.sum_cols()),
        OpKind::Mean => {
            if a.shape().is_empty() {
                Err(mismatch(op, values))
            } else {
                Ok(Tensor::scalar(a.sum() / a.shape().len() as f64))
            }
        }
        OpKind::Abs => Ok(a.map(math::abs)),
        OpKind::ClampMin { min } => Ok(a.map(|x| if x > min { x } else { min })),
        OpKind::Powf { exponent } => Ok(a.map(|x| math::powf(x, exponent))),
        OpKind::Scale { factor } => Ok(a.map(|x| x * factor)),
        OpKind::AddScalar { value } => Ok(a.map(|x| x + value)),
        OpKind::Transpose => Ok(a.transpose()),
        OpKind::Expand { rows, cols } => {
            let s = a.shape();
            let ok = (s.rows == 1 || s.rows == rows) && (s.cols == 1 || s.cols == cols);
            if ok {
                Ok(a.expand(Shape::new(rows, cols)))
            } else {
                Err(AutodiffError::ShapeMismatch {
                    op: op.name(),
                    shapes: vec![s, Shape::new(rows, cols)],
                })
            }
        }
        OpKind::ConcatCols => {
            if values.iter().all(|t| t.rows() == a.rows()) {
                Ok(Tensor::concat_cols(values))
            } else {
                Err(mismatch(op, values))
            }
        }
        OpKind::SliceCols { start, len } => {
            if start + len <= a.cols() {
                Ok(a.slice_cols(start, len))
            } else {
                Err(mismatch(op, values))
            }
        }
        OpKind::PadCols { start, total } => {
            if start + a.cols() <= total {
                Ok(a.pad_cols(start, total))
            } else {
                Err(mismatch(op, values))
            }
        }
    }
}

#[cfg(test)]
mod tests;
