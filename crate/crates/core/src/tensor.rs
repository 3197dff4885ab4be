//! Dense real third-order tensors and the T-product algebra.
//!
//! A [`Tensor3`] of size `n × m × r` is a stack of `r` frontal slices, each an
//! `n × m` matrix. Storage is slice-major with row-major slices, so slice `k`
//! (0-based here, 1-based in file formats) is one contiguous run of `n·m`
//! values.
//!
//! The T-product is defined through the block-circulant operator
//! [`Tensor3::bcirc`] and the vertical unfolding [`Tensor3::unfold`]:
//! `a ⋆ b = fold(bcirc(a) · unfold(b))`, which is a circular convolution of
//! the slice sequences.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

pub type RealMatrix = DMatrix<f64>;

/// Dense real `n × m × r` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    m: usize,
    r: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Tensor3 {}x{}x{}", self.n, self.m, self.r)?;
        for k in 0..self.r {
            writeln!(f, "  slice {}: {:?}", k + 1, self.slice_rows(k))?;
        }
        Ok(())
    }
}

impl Tensor3 {
    /// Builds a tensor from slice-major, row-major data.
    ///
    /// Zero row or column counts are allowed (empty tensors act as neutral
    /// elements for concatenation); the depth must be positive.
    pub fn new(n: usize, m: usize, r: usize, data: Vec<f64>) -> Result<Self> {
        if r == 0 {
            return Err(Error::DimensionMismatch("tensor depth must be positive".into()));
        }
        if data.len() != n * m * r {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                n,
                m,
                r
            )));
        }
        Ok(Tensor3 { n, m, r, data })
    }

    pub fn zeros(n: usize, m: usize, r: usize) -> Self {
        assert!(r > 0, "tensor depth must be positive");
        Tensor3 {
            n,
            m,
            r,
            data: vec![0.0; n * m * r],
        }
    }

    /// T-identity: first slice is `I_n`, all other slices vanish.
    pub fn identity(n: usize, r: usize) -> Self {
        let mut t = Self::zeros(n, n, r);
        for i in 0..n {
            t.set(i, i, 0, 1.0);
        }
        t
    }

    /// Builds a tensor from its frontal slices.
    pub fn from_slices(slices: &[RealMatrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::DimensionMismatch("at least one slice is required".into()))?;
        let (n, m) = first.shape();
        let mut data = Vec::with_capacity(n * m * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n, m) {
                return Err(Error::DimensionMismatch(format!(
                    "slice {} is {}x{}, expected {}x{}",
                    k + 1,
                    s.nrows(),
                    s.ncols(),
                    n,
                    m
                )));
            }
            for i in 0..n {
                for j in 0..m {
                    data.push(s[(i, j)]);
                }
            }
        }
        Tensor3::new(n, m, slices.len(), data)
    }

    /// Depth-`r` tensor with `slice` as its first frontal slice and zeros elsewhere.
    pub fn from_first_slice(slice: &RealMatrix, r: usize) -> Self {
        let mut t = Self::zeros(slice.nrows(), slice.ncols(), r);
        t.set_slice(0, slice);
        t
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }
    #[inline]
    pub fn r(&self) -> usize {
        self.r
    }
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.r)
    }
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.n * self.m + i * self.m + j
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Frontal slice `k` (0-based) as a matrix.
    pub fn slice(&self, k: usize) -> RealMatrix {
        let start = k * self.n * self.m;
        DMatrix::from_row_slice(self.n, self.m, &self.data[start..start + self.n * self.m])
    }

    pub fn slices(&self) -> Vec<RealMatrix> {
        (0..self.r).map(|k| self.slice(k)).collect()
    }

    fn slice_rows(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.m).map(|j| self.get(i, j, k)).collect())
            .collect()
    }

    pub fn set_slice(&mut self, k: usize, s: &RealMatrix) {
        assert_eq!(s.shape(), (self.n, self.m), "slice shape mismatch");
        for i in 0..self.n {
            for j in 0..self.m {
                self.set(i, j, k, s[(i, j)]);
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    /// Largest entrywise absolute difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims(), other.dims(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, alpha: f64) -> Tensor3 {
        self.map(|x| alpha * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            n: self.n,
            m: self.m,
            r: self.r,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Tensor3 {
        assert_eq!(
            self.dims(),
            other.dims(),
            "elementwise operation on tensors of different shape"
        );
        Tensor3 {
            n: self.n,
            m: self.m,
            r: self.r,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Block-circulant matrix `ψ(t)` of size `nr × mr`; block `(p, q)` is slice `(p − q) mod r`.
    pub fn bcirc(&self) -> RealMatrix {
        let (n, m, r) = self.dims();
        let mut out = DMatrix::zeros(n * r, m * r);
        for p in 0..r {
            for q in 0..r {
                let k = (p + r - q) % r;
                for i in 0..n {
                    for j in 0..m {
                        out[(p * n + i, q * m + j)] = self.get(i, j, k);
                    }
                }
            }
        }
        out
    }

    /// Vertical unfolding `φ(t)`: the slices stacked into an `nr × m` matrix.
    pub fn unfold(&self) -> RealMatrix {
        let (n, m, r) = self.dims();
        let mut out = DMatrix::zeros(n * r, m);
        for k in 0..r {
            for i in 0..n {
                for j in 0..m {
                    out[(k * n + i, j)] = self.get(i, j, k);
                }
            }
        }
        out
    }

    /// Inverse of [`Tensor3::unfold`]: splits an `nr × m` matrix into `r` slices of `n` rows.
    pub fn fold(mat: &RealMatrix, n: usize, r: usize) -> Result<Tensor3> {
        if r == 0 || mat.nrows() != n * r {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix into {} slices of {} rows",
                mat.nrows(),
                mat.ncols(),
                r,
                n
            )));
        }
        let m = mat.ncols();
        let mut t = Tensor3::zeros(n, m, r);
        for k in 0..r {
            for i in 0..n {
                for j in 0..m {
                    t.set(i, j, k, mat[(k * n + i, j)]);
                }
            }
        }
        Ok(t)
    }

    /// Inverse of [`Tensor3::bcirc`] for a depth-`r` block-circulant matrix.
    ///
    /// The tensor is read from the first block column. With `strict`, the
    /// remaining blocks must repeat it (relative tolerance `1e-12`), otherwise
    /// [`Error::NotCirculant`] is returned; without it the first block column
    /// is taken as is.
    pub fn from_bcirc(mat: &RealMatrix, r: usize, strict: bool) -> Result<Tensor3> {
        if r == 0 || mat.nrows() % r != 0 || mat.ncols() % r != 0 {
            return Err(Error::DimensionMismatch(format!(
                "a {}x{} matrix is not made of {}x{} blocks",
                mat.nrows(),
                mat.ncols(),
                r,
                r
            )));
        }
        let n = mat.nrows() / r;
        let m = mat.ncols() / r;
        let first = mat.columns(0, m).into_owned();
        let t = Tensor3::fold(&first, n, r)?;
        if strict {
            let scale = mat.amax().max(f64::MIN_POSITIVE);
            let deviation = (&t.bcirc() - mat).amax();
            if deviation > 1e-12 * scale {
                return Err(Error::NotCirculant { deviation });
            }
        }
        Ok(t)
    }

    /// T-product `self ⋆ other`, computed as a circular convolution of slices.
    pub fn tprod(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.m != other.n || self.r != other.r {
            return Err(Error::DimensionMismatch(format!(
                "T-product of {}x{}x{} and {}x{}x{}",
                self.n, self.m, self.r, other.n, other.m, other.r
            )));
        }
        let (n, inner, r) = self.dims();
        let h = other.m;
        let a = self.slices();
        let b = other.slices();
        let mut out = Tensor3::zeros(n, h, r);
        let mut acc = DMatrix::zeros(n, h);
        for k in 0..r {
            acc.fill(0.0);
            for (q, bq) in b.iter().enumerate() {
                let ak = &a[(k + r - q) % r];
                if inner > 0 {
                    acc.gemm(1.0, ak, bq, 1.0);
                }
            }
            out.set_slice(k, &acc);
        }
        Ok(out)
    }

    /// T-transpose: transpose every slice and reverse slices `2..r`.
    pub fn ttranspose(&self) -> Tensor3 {
        let (n, m, r) = self.dims();
        let mut out = Tensor3::zeros(m, n, r);
        for k in 0..r {
            let src = (r - k) % r;
            for i in 0..n {
                for j in 0..m {
                    out.set(j, i, k, self.get(i, j, src));
                }
            }
        }
        out
    }

    /// T-inverse, computed block-wise in the Fourier domain.
    ///
    /// Fails with [`Error::Singular`] when some block has
    /// `σ_min ≤ n · σ_max · 1e-12`, `σ_max` taken over all blocks.
    pub fn tinverse(&self) -> Result<Tensor3> {
        if self.n != self.m {
            return Err(Error::DimensionMismatch(format!(
                "T-inverse of a non-square {}x{}x{} tensor",
                self.n, self.m, self.r
            )));
        }
        let blocks = spectral::to_fourier(self);
        let svals: Vec<_> = blocks
            .blocks()
            .iter()
            .map(|b| b.clone().singular_values())
            .collect();
        let global_max = svals
            .iter()
            .flat_map(|s| s.iter().copied())
            .fold(0.0_f64, f64::max);
        let tol = self.n as f64 * global_max * 1e-12;
        for (j, s) in svals.iter().enumerate() {
            let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
            if !(smin > tol) || global_max == 0.0 {
                let ratio = if global_max > 0.0 { smin / global_max } else { 0.0 };
                return Err(Error::Singular { block: j + 1, ratio });
            }
        }
        let inv = blocks.try_map(|j, b| {
            b.clone()
                .try_inverse()
                .ok_or(Error::Singular { block: j + 1, ratio: 0.0 })
        })?;
        spectral::from_fourier(&inv)
    }

    /// Row block tensor `[a b]`: concatenation along the second mode.
    pub fn block_row(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
        Tensor3::hcat(&[a, b])
    }

    /// Column block tensor `[a; b]`: concatenation along the first mode.
    pub fn block_col(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
        Tensor3::vcat(&[a, b])
    }

    /// Concatenation along the second mode.
    pub fn hcat(parts: &[&Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to concatenate".into()))?;
        let (n, r) = (first.n, first.r);
        if let Some(bad) = parts.iter().find(|t| t.n != n || t.r != r) {
            return Err(Error::DimensionMismatch(format!(
                "row block of {}x{}x{} with {}x{}x{}",
                n, first.m, r, bad.n, bad.m, bad.r
            )));
        }
        let m: usize = parts.iter().map(|t| t.m).sum();
        let mut out = Tensor3::zeros(n, m, r);
        let mut col = 0;
        for t in parts {
            for k in 0..r {
                for i in 0..n {
                    for j in 0..t.m {
                        out.set(i, col + j, k, t.get(i, j, k));
                    }
                }
            }
            col += t.m;
        }
        Ok(out)
    }

    /// Concatenation along the first mode.
    pub fn vcat(parts: &[&Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to concatenate".into()))?;
        let (m, r) = (first.m, first.r);
        if let Some(bad) = parts.iter().find(|t| t.m != m || t.r != r) {
            return Err(Error::DimensionMismatch(format!(
                "column block of {}x{}x{} with {}x{}x{}",
                first.n, m, r, bad.n, bad.m, bad.r
            )));
        }
        let n: usize = parts.iter().map(|t| t.n).sum();
        let mut out = Tensor3::zeros(n, m, r);
        let mut row = 0;
        for t in parts {
            for k in 0..r {
                for i in 0..t.n {
                    for j in 0..m {
                        out.set(row + i, j, k, t.get(i, j, k));
                    }
                }
            }
            row += t.n;
        }
        Ok(out)
    }

    /// Columns `start..start+len` along the second mode.
    pub fn column_range(&self, start: usize, len: usize) -> Tensor3 {
        assert!(start + len <= self.m, "column range out of bounds");
        let mut out = Tensor3::zeros(self.n, len, self.r);
        for k in 0..self.r {
            for i in 0..self.n {
                for j in 0..len {
                    out.set(i, j, k, self.get(i, start + j, k));
                }
            }
        }
        out
    }

    /// Rows `start..start+len` along the first mode.
    pub fn row_range(&self, start: usize, len: usize) -> Tensor3 {
        assert!(start + len <= self.n, "row range out of bounds");
        let mut out = Tensor3::zeros(len, self.m, self.r);
        for k in 0..self.r {
            for i in 0..len {
                for j in 0..self.m {
                    out.set(i, j, k, self.get(start + i, j, k));
                }
            }
        }
        out
    }
}

impl Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &Tensor3 {
    type Output = Tensor3;
    fn neg(self) -> Tensor3 {
        self.map(|x| -x)
    }
}

impl Mul<f64> for &Tensor3 {
    type Output = Tensor3;
    fn mul(self, rhs: f64) -> Tensor3 {
        self.scale(rhs)
    }
}

/// Wire form: `{"dims": [n, m, r], "slices": [S_1, …, S_r]}` with row-major slices.
#[derive(Serialize, Deserialize)]
struct TensorJson {
    dims: [usize; 3],
    slices: Vec<Vec<Vec<f64>>>,
}

impl Serialize for Tensor3 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TensorJson {
            dims: [self.n, self.m, self.r],
            slices: (0..self.r).map(|k| self.slice_rows(k)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Tensor3 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = TensorJson::deserialize(deserializer)?;
        Tensor3::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<TensorJson> for Tensor3 {
    type Error = Error;

    fn try_from(raw: TensorJson) -> Result<Self> {
        let [n, m, r] = raw.dims;
        if n == 0 || m == 0 || r == 0 {
            return Err(Error::Parse(format!("dims must be positive, got {:?}", raw.dims)));
        }
        if raw.slices.len() != r {
            return Err(Error::Parse(format!(
                "dims declare {} slices but {} were given",
                r,
                raw.slices.len()
            )));
        }
        let mut data = Vec::with_capacity(n * m * r);
        for (k, s) in raw.slices.iter().enumerate() {
            if s.len() != n {
                return Err(Error::Parse(format!(
                    "slice {} has {} rows, dims declare {}",
                    k + 1,
                    s.len(),
                    n
                )));
            }
            for (i, row) in s.iter().enumerate() {
                if row.len() != m {
                    return Err(Error::Parse(format!(
                        "slice {} row {} has {} entries, dims declare {}",
                        k + 1,
                        i + 1,
                        row.len(),
                        m
                    )));
                }
                data.extend_from_slice(row);
            }
        }
        Tensor3::new(n, m, r, data)
    }
}
