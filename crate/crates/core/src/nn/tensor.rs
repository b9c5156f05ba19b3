use std::fmt;

use crate::scalar::Scalar;

/// Dense row-major tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Panics if `data.len()` disagrees with the shape; use [`Tensor::try_new`]
    /// for untrusted input.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        Self::try_new(shape, data).expect("tensor shape/data length mismatch")
    }

    pub fn try_new(shape: Vec<usize>, data: Vec<T>) -> Option<Self> {
        (shape.iter().product::<usize>() == data.len()).then_some(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn vector(v: Vec<T>) -> Self {
        Self {
            shape: vec![v.len()],
            data: v,
        }
    }

    /// Builds a `rows.len() x width` matrix; all rows must share a width.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self {
            shape: vec![rows.len(), width],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Some((r, c)),
            _ => None,
        }
    }

    /// Size of the trailing axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn get2(&self, r: usize, c: usize) -> T {
        self.data[r * self.shape[1] + c]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Option<Self> {
        (shape.iter().product::<usize>() == self.data.len()).then(|| {
            self.shape = shape;
            self
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Rank-2 matrix product.
    pub fn matmul(&self, other: &Self) -> Option<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return None;
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Some(Self::new(vec![m, n], out))
    }

    /// Per-group product of stacked rank-2 blocks. `self` stacks `groups`
    /// row blocks, as does `other`; block `g` of the result is
    /// `op(A_g) op(B_g)` where `op` transposes when the flag is set.
    pub fn block_matmul(&self, trans_a: bool, other: &Self, trans_b: bool, groups: usize) -> Option<Self> {
        let (ra, ca) = self.dims2()?;
        let (rb, cb) = other.dims2()?;
        if groups == 0 || ra % groups != 0 || rb % groups != 0 {
            return None;
        }
        let (ra, rb) = (ra / groups, rb / groups);
        let (m, k) = if trans_a { (ca, ra) } else { (ra, ca) };
        let (k2, n) = if trans_b { (cb, rb) } else { (rb, cb) };
        if k != k2 {
            return None;
        }
        let a_at = |g: usize, i: usize, p: usize| {
            if trans_a {
                self.data[(g * ra + p) * ca + i]
            } else {
                self.data[(g * ra + i) * ca + p]
            }
        };
        let b_at = |g: usize, p: usize, j: usize| {
            if trans_b {
                other.data[(g * rb + j) * cb + p]
            } else {
                other.data[(g * rb + p) * cb + j]
            }
        };
        let mut out = vec![T::zero(); groups * m * n];
        for g in 0..groups {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = T::zero();
                    for p in 0..k {
                        acc = acc + a_at(g, i, p) * b_at(g, p, j);
                    }
                    out[(g * m + i) * n + j] = acc;
                }
            }
        }
        Some(Self::new(vec![groups * m, n], out))
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Option<Self> {
        let (m, n) = self.dims2()?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Some(Self::new(vec![n, m], out))
    }
}
