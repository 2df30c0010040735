//! Dense row-major 2-D tensors of `f64`.
//!
//! Every value on the tape is a matrix; scalars are `1x1`, row vectors
//! `1xn`, and batches of examples are `rows = batch, cols = features`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Output widths up to this use the dot-product kernel in `matmul`.
const NARROW_OUTPUT: usize = 4;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub const fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from row-major data. Returns `None` when the data
    /// length does not match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Tensor {
            shape: Shape::new(rows, cols),
            data,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::SCALAR,
            data: vec![value],
        }
    }

    pub fn row(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::new(1, data.len()),
            data,
        }
    }

    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::new(data.len(), 1),
            data,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape.cols + col]
    }

    pub fn row_slice(&self, row: usize) -> &[f64] {
        let c = self.shape.cols;
        &self.data[row * c..(row + 1) * c]
    }

    /// First element; the value of a scalar tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape);
        Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.shape.rows, self.shape.cols, other.shape.cols);
        debug_assert_eq!(k, other.shape.rows);
        if m == 0 || k == 0 {
            return Tensor::zeros(Shape::new(n, m));
        }
        if m <= NARROW_OUTPUT {
            // row-times-column dot products; same summation order as below
            let bt = other.transpose();
            let mut out = Vec::with_capacity(n * m);
            for a_row in self.data.chunks_exact(k) {
                for b_col in bt.data.chunks_exact(k) {
                    out.push(a_row.iter().zip(b_col).fold(0.0, |s, (a, b)| s + a * b));
                }
            }
            return Tensor {
                shape: Shape::new(n, m),
                data: out,
            };
        }
        let mut out = vec![0.0; n * m];
        for (a_row, out_row) in self.data.chunks_exact(k).zip(out.chunks_exact_mut(m)) {
            for (&a, b_row) in a_row.iter().zip(other.data.chunks_exact(m)) {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor {
            shape: Shape::new(n, m),
            data: out,
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.shape.rows, self.shape.cols);
        if r == 0 || c == 0 {
            return Tensor::zeros(Shape::new(c, r));
        }
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            out.extend(self.data[j..].iter().step_by(c));
        }
        Tensor {
            shape: Shape::new(c, r),
            data: out,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums, `r x c -> 1 x c`.
    pub fn sum_rows(&self) -> Tensor {
        let c = self.shape.cols;
        let mut out = vec![0.0; c];
        for row in self.data.chunks_exact(c.max(1)) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor::row(out)
    }

    /// Row sums, `r x c -> r x 1`.
    pub fn sum_cols(&self) -> Tensor {
        let c = self.shape.cols.max(1);
        Tensor::column(self.data.chunks_exact(c).map(|r| r.iter().sum()).collect())
    }

    /// Broadcasts a `1x1`, `1xc`, `rx1` (or equal-shaped) tensor to `shape`.
    pub fn expand(&self, shape: Shape) -> Tensor {
        let src = self.shape;
        if src == shape {
            return self.clone();
        }
        let mut data = Vec::with_capacity(shape.len());
        if src.rows == 1 && src.cols == shape.cols {
            for _ in 0..shape.rows {
                data.extend_from_slice(&self.data);
            }
            return Tensor { shape, data };
        }
        if src.cols == 1 && src.rows == shape.rows {
            for &x in &self.data {
                data.extend(core::iter::repeat_n(x, shape.cols));
            }
            return Tensor { shape, data };
        }
        for i in 0..shape.rows {
            let si = if src.rows == 1 { 0 } else { i };
            for j in 0..shape.cols {
                let sj = if src.cols == 1 { 0 } else { j };
                data.push(self.data[si * src.cols + sj]);
            }
        }
        Tensor { shape, data }
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let c = self.shape.cols;
        let mut data = Vec::with_capacity(self.shape.rows * len);
        for row in self.data.chunks_exact(c.max(1)) {
            data.extend_from_slice(&row[start..start + len]);
        }
        Tensor {
            shape: Shape::new(self.shape.rows, len),
            data,
        }
    }

    pub fn pad_cols(&self, start: usize, total: usize) -> Tensor {
        let (r, c) = (self.shape.rows, self.shape.cols);
        let mut data = vec![0.0; r * total];
        for i in 0..r {
            data[i * total + start..i * total + start + c].copy_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Tensor {
            shape: Shape::new(r, total),
            data,
        }
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        let rows = parts.first().map_or(0, |t| t.shape.rows);
        let total: usize = parts.iter().map(|t| t.shape.cols).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for t in parts {
                data.extend_from_slice(t.row_slice(i));
            }
        }
        Tensor {
            shape: Shape::new(rows, total),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
