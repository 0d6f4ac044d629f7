//! Dense row-major tensors of 64-bit floats.
//!
//! Rank 1 covers vectors, rank 2 matrices; that is all the model needs.
//! Tensors are plain values: the autodiff graph owns node tensors and
//! treats them as immutable once published.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![1], vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self::new(vec![rows, cols], data)
    }

    /// Uniform(-s, s) initialization with s = 1/sqrt(fan_in).
    pub fn glorot_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut SplitMix64) -> Self {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.uniform(-s, s)).collect();
        Self::new(shape, data)
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut data = vec![0.0; len];
        data[index] = 1.0;
        Self::vector(data)
    }

    /// One one-hot row per index.
    pub fn one_hot_rows(indices: &[usize], cols: usize) -> Self {
        let mut data = vec![0.0; indices.len() * cols];
        for (row, &idx) in indices.iter().enumerate() {
            data[row * cols + idx] = 1.0;
        }
        Self::matrix(indices.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a scalar (one-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor {:?}", self.shape);
        self.data[0]
    }

    /// Rows/cols view: vectors count as a single row.
    pub fn as_2d(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("as_2d on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (rows, cols) = self.as_2d();
        assert!(r < rows);
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let (rows, cols) = self.as_2d();
        assert!(r < rows);
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        let (_, cols) = self.as_2d();
        self.data[r * cols + c]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: lhs.shape.clone(),
            rhs: rhs.shape.clone(),
        }
    }

    /// Matrix product with vector promotion: a vector on the left acts as a
    /// 1xN row, a vector on the right as an Nx1 column, and the result rank
    /// follows the operands (two vectors produce a scalar).
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (ar, ac) = self.as_2d_checked("matmul", other)?;
        let (br, bc) = match other.rank() {
            1 => (other.shape[0], 1),
            2 => (other.shape[0], other.shape[1]),
            _ => return Err(Self::shape_err("matmul", self, other)),
        };
        if ac != br {
            return Err(Self::shape_err("matmul", self, other));
        }
        let mut out = vec![0.0; ar * bc];
        mm(&self.data, ar, ac, &other.data, bc, &mut out);
        let shape = match (self.rank(), other.rank()) {
            (1, 1) => vec![1],
            (1, 2) => vec![bc],
            (2, 1) => vec![ar],
            _ => vec![ar, bc],
        };
        Ok(Tensor::new(shape, out))
    }

    fn as_2d_checked(&self, op: &'static str, other: &Tensor) -> Result<(usize, usize)> {
        match self.rank() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Self::shape_err(op, self, other)),
        }
    }

    /// self · otherᵀ, on 2-D views.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (ar, ac) = self.as_2d();
        let (br, bc) = other.as_2d();
        assert_eq!(ac, bc, "matmul_nt inner mismatch");
        let mut out = vec![0.0; ar * br];
        for i in 0..ar {
            let a_row = &self.data[i * ac..(i + 1) * ac];
            for j in 0..br {
                let b_row = &other.data[j * bc..(j + 1) * bc];
                out[i * br + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            }
        }
        Tensor::matrix(ar, br, out)
    }

    /// selfᵀ · other, on 2-D views.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        let (ar, ac) = self.as_2d();
        let (br, bc) = other.as_2d();
        assert_eq!(ar, br, "matmul_tn inner mismatch");
        let mut out = vec![0.0; ac * bc];
        for i in 0..ar {
            let a_row = &self.data[i * ac..(i + 1) * ac];
            let b_row = &other.data[i * bc..(i + 1) * bc];
            for (k, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    let out_row = &mut out[k * bc..(k + 1) * bc];
                    for (o, &b) in out_row.iter_mut().zip(b_row) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor::matrix(ac, bc, out)
    }
}

/// out[ar x bc] = a[ar x ac] · b[ac x bc].
fn mm(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize, out: &mut [f64]) {
    for i in 0..ar {
        let out_row = &mut out[i * bc..(i + 1) * bc];
        for k in 0..ac {
            let aik = a[i * ac + k];
            if aik != 0.0 {
                let b_row = &b[k * bc..(k + 1) * bc];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
            }
        }
    }
}
