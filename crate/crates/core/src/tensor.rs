//! Dense row-major `f32` tensors.
//!
//! The last dimension varies fastest. Images are channels-last `[N, H, W, C]`.
//! Every public operation leaves only finite values behind; NaN/Inf inputs or
//! results surface as [`Error::Numeric`]. Reductions and matrix products
//! accumulate in a fixed left-to-right order so results are reproducible
//! within a build.

use crate::error::{Error, Result};

/// Tensor dimensions. Rank 0 (a scalar) is allowed; every listed dim is >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dim in {dims:?}")));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Product of all dims (1 for a scalar).
    pub fn elem_count(&self) -> usize {
        self.0.iter().product()
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

/// Pointwise binary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
}

/// Axis reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
    /// Index of the maximum; ties break toward the lowest index.
    Argmax,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if data.len() != shape.elem_count() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.elem_count()
            )));
        }
        let t = Tensor { shape, data };
        t.check_finite()?;
        Ok(t)
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let shape = Shape::new(dims).expect("zeros: invalid shape");
        let n = shape.elem_count();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: &[usize], value: f32) -> Self {
        let shape = Shape::new(dims).expect("filled: invalid shape");
        let n = shape.elem_count();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: Shape(vec![]),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// In-place access. Only the unique owner may mutate; shared tensors are
    /// read-only by contract.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Scalar view of a rank-0 or single-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1, "item() on multi-element tensor");
        self.data[0]
    }

    /// Reinterpret the flat data under new dims with the same element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if shape.elem_count() != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "non-finite value in tensor of shape {}",
                self.shape
            )))
        }
    }

    /// Pointwise op between `a` and `b`.
    ///
    /// `b` must have the same shape as `a`, be a single element (scalar
    /// broadcast), or be rank-1 with length equal to `a`'s last dim
    /// (broadcast along the last axis). The result always has `a`'s shape.
    pub fn elementwise(op: ElemOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let f = |x: f32, y: f32| match op {
            ElemOp::Add => x + y,
            ElemOp::Sub => x - y,
            ElemOp::Mul => x * y,
        };
        let data: Vec<f32> = if a.shape == b.shape {
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
        } else if b.len() == 1 {
            let y = b.data[0];
            a.data.iter().map(|&x| f(x, y)).collect()
        } else if b.shape.rank() == 1 && a.shape.rank() >= 1 {
            let last = *a.dims().last().unwrap();
            if b.len() != last {
                return Err(Error::Shape(format!(
                    "cannot broadcast {} against {} (last axis {last})",
                    b.shape, a.shape
                )));
            }
            a.data
                .chunks_exact(last)
                .flat_map(|row| row.iter().zip(&b.data).map(|(&x, &y)| f(x, y)))
                .collect()
        } else {
            return Err(Error::Shape(format!(
                "elementwise shapes differ: {} vs {}",
                a.shape, b.shape
            )));
        };
        let t = Tensor {
            shape: a.shape.clone(),
            data,
        };
        t.check_finite()?;
        Ok(t)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElemOp::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElemOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElemOp::Mul, self, other)
    }

    pub fn scale(&self, k: f32) -> Result<Tensor> {
        Tensor::elementwise(ElemOp::Mul, self, &Tensor::scalar(k))
    }

    /// `[M,K] x [K,N] -> [M,N]` with a fixed left-to-right sum over K.
    pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ad, bd) = (a.dims(), b.dims());
        if ad.len() != 2 || bd.len() != 2 {
            return Err(Error::Shape(format!(
                "matmul expects rank-2 tensors, got {} and {}",
                a.shape, b.shape
            )));
        }
        let (m, k) = (ad[0], ad[1]);
        let (k2, n) = (bd[0], bd[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dims differ: {} vs {}",
                a.shape, b.shape
            )));
        }
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let a_row = &a.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (kk, &av) in a_row.iter().enumerate() {
                let b_row = &b.data[kk * n..(kk + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
        let t = Tensor {
            shape: Shape(vec![m, n]),
            data: out,
        };
        t.check_finite()?;
        Ok(t)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2d(&self) -> Result<Tensor> {
        let d = self.dims();
        if d.len() != 2 {
            return Err(Error::Shape(format!(
                "transpose2d expects rank 2, got {}",
                self.shape
            )));
        }
        let (m, n) = (d[0], d[1]);
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: Shape(vec![n, m]),
            data: out,
        })
    }

    /// Reduce along `axis`, dropping it from the result shape.
    pub fn reduce(op: ReduceOp, t: &Tensor, axis: usize) -> Result<Tensor> {
        let dims = t.dims();
        if axis >= dims.len() {
            return Err(Error::Axis(format!(
                "axis {axis} out of range for shape {}",
                t.shape
            )));
        }
        let outer: usize = dims[..axis].iter().product();
        let reduced = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out_dims = dims.to_vec();
        out_dims.remove(axis);

        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * reduced * inner + i;
                let first = t.data[base];
                let mut acc = match op {
                    ReduceOp::Sum | ReduceOp::Mean => first,
                    ReduceOp::Max | ReduceOp::Argmax => first,
                };
                let mut arg = 0usize;
                for r in 1..reduced {
                    let v = t.data[base + r * inner];
                    match op {
                        ReduceOp::Sum | ReduceOp::Mean => acc += v,
                        ReduceOp::Max => acc = acc.max(v),
                        ReduceOp::Argmax => {
                            // Strictly greater keeps the lowest index on ties.
                            if v > acc {
                                acc = v;
                                arg = r;
                            }
                        }
                    }
                }
                out[o * inner + i] = match op {
                    ReduceOp::Sum | ReduceOp::Max => acc,
                    ReduceOp::Mean => acc / reduced as f32,
                    ReduceOp::Argmax => arg as f32,
                };
            }
        }
        let t = Tensor {
            shape: Shape(out_dims),
            data: out,
        };
        t.check_finite()?;
        Ok(t)
    }

    pub fn sum_all(&self) -> f32 {
        self.data.iter().sum()
    }
}
