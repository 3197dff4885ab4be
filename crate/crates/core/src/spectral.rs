//! Fourier-domain block diagonalization, T-EVD, T-SVD and spectral tests.
//!
//! Conjugating `ψ(t)` by the DFT along the third mode turns it into
//! `blkdiag(T_1, …, T_r)`. Block `j` is computed here as the *unnormalized*
//! DFT of the slice sequence,
//!
//! ```text
//! T_j = Σ_k t_{::k} · exp(−2πi (j−1)(k−1) / r),
//! ```
//!
//! with the `1/r` factor on the inverse transform. This is exactly the block
//! produced by the unitary similarity `(F_r ⊗ I) ψ(t) (F_r* ⊗ I)`, so ranks,
//! spectra, LMI certificates and Riccati solutions computed per block are
//! unaffected by the normalization choice.
//!
//! For real tensors the blocks come in conjugate pairs, `T_{r+2−j} = conj(T_j)`,
//! and `T_1` (plus `T_{r/2+1}` for even `r`) is real. Only the first
//! `⌊r/2⌋ + 1` blocks carry independent information.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::tensor::Tensor3;

/// Tolerance on conjugate symmetry accepted by [`from_fourier`] (relative to the block scale).
pub const CONJUGATE_SYMMETRY_TOL: f64 = 1e-8;
/// Blocks that must be real are considered real below this relative imaginary residue.
pub const REAL_BLOCK_TOL: f64 = 1e-12;
/// Eigenvector-matrix condition number beyond which a block counts as defective.
pub const DEFECTIVE_COND: f64 = 1e12;

/// Number of Fourier blocks that determine all others for a real tensor of depth `r`.
pub fn unique_block_count(r: usize) -> usize {
    r / 2 + 1
}

/// 0-based index of the conjugate partner of block `j`.
pub fn mirror_index(j: usize, r: usize) -> usize {
    (r - j) % r
}

/// Whether block `j` (0-based) of a real tensor is itself real.
pub fn is_self_conjugate(j: usize, r: usize) -> bool {
    mirror_index(j, r) == j
}

/// The `r` diagonal blocks of the DFT-conjugated block-circulant matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierBlocks {
    n: usize,
    m: usize,
    blocks: Vec<ComplexMatrix>,
}

impl FourierBlocks {
    pub fn new(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::DimensionMismatch("at least one block is required".into()))?;
        let (n, m) = first.shape();
        if blocks.iter().any(|b| b.shape() != (n, m)) {
            return Err(Error::DimensionMismatch("Fourier blocks differ in shape".into()));
        }
        Ok(FourierBlocks { n, m, blocks })
    }

    /// Completes a spectrum from its unique blocks `0..=r/2` by conjugate mirroring.
    ///
    /// Self-conjugate blocks have their imaginary parts dropped.
    pub fn from_unique(unique: Vec<ComplexMatrix>, r: usize) -> Result<Self> {
        if unique.len() != unique_block_count(r) {
            return Err(Error::DimensionMismatch(format!(
                "depth {} needs {} unique blocks, got {}",
                r,
                unique_block_count(r),
                unique.len()
            )));
        }
        let mut blocks = Vec::with_capacity(r);
        for j in 0..r {
            let src = if j < unique.len() { j } else { mirror_index(j, r) };
            let b = &unique[src];
            let b = if j != src {
                b.map(|z| z.conj())
            } else if is_self_conjugate(j, r) {
                b.map(|z| Complex64::new(z.re, 0.0))
            } else {
                b.clone()
            };
            blocks.push(b);
        }
        FourierBlocks::new(blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn r(&self) -> usize {
        self.blocks.len()
    }
    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }
    pub fn block(&self, j: usize) -> &ComplexMatrix {
        &self.blocks[j]
    }
    pub fn into_blocks(self) -> Vec<ComplexMatrix> {
        self.blocks
    }

    pub fn map(&self, f: impl Fn(usize, &ComplexMatrix) -> ComplexMatrix) -> Result<FourierBlocks> {
        FourierBlocks::new(self.blocks.iter().enumerate().map(|(j, b)| f(j, b)).collect())
    }

    pub fn try_map(
        &self,
        f: impl Fn(usize, &ComplexMatrix) -> Result<ComplexMatrix>,
    ) -> Result<FourierBlocks> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| f(j, b))
            .collect::<Result<Vec<_>>>()?;
        FourierBlocks::new(blocks)
    }

    /// Largest deviation from conjugate symmetry, and the block where it occurs.
    ///
    /// Covers both `T_{r+2−j} = conj(T_j)` and realness of self-conjugate blocks.
    pub fn conjugate_symmetry_deviation(&self) -> (usize, f64) {
        let r = self.r();
        let mut worst = (0, 0.0);
        for j in 0..r {
            let partner = &self.blocks[mirror_index(j, r)];
            let dev = self.blocks[j]
                .iter()
                .zip(partner.iter())
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b.conj()).norm()));
            if dev > worst.1 {
                worst = (j, dev);
            }
        }
        worst
    }

    /// Averages each block with the conjugate of its partner, making the
    /// spectrum exactly that of a real tensor.
    pub fn symmetrize(&self) -> FourierBlocks {
        let r = self.r();
        let blocks = (0..r)
            .map(|j| {
                let partner = &self.blocks[mirror_index(j, r)];
                self.blocks[j].zip_map(partner, |a, b| (a + b.conj()) * 0.5)
            })
            .collect();
        FourierBlocks {
            n: self.n,
            m: self.m,
            blocks,
        }
    }

    /// The block-diagonal matrix `blkdiag(T_1, …, T_r)`.
    pub fn blkdiag(&self) -> ComplexMatrix {
        let r = self.r();
        let mut out = ComplexMatrix::zeros(self.n * r, self.m * r);
        for (j, b) in self.blocks.iter().enumerate() {
            out.view_mut((j * self.n, j * self.m), (self.n, self.m)).copy_from(b);
        }
        out
    }

    fn scale(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::max_abs)
            .fold(0.0_f64, f64::max)
    }
}

/// Fourier blocks of a real tensor (FFT along every tube).
pub fn to_fourier(t: &Tensor3) -> FourierBlocks {
    let (n, m, r) = t.dims();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n * m * r);
    for i in 0..n {
        for j in 0..m {
            for k in 0..r {
                buf.push(Complex64::new(t.get(i, j, k), 0.0));
            }
        }
    }
    if r > 1 && !buf.is_empty() {
        let fft = FftPlanner::new().plan_fft_forward(r);
        fft.process(&mut buf);
    }
    let blocks = (0..r)
        .map(|k| DMatrix::from_fn(n, m, |i, j| buf[(i * m + j) * r + k]))
        .collect();
    FourierBlocks { n, m, blocks }
}

/// Inverse transform back to a real tensor.
///
/// Fails with [`Error::ConjugateSymmetry`] when the blocks are not the
/// spectrum of a real tensor within [`CONJUGATE_SYMMETRY_TOL`]; callers that
/// want repair must call [`FourierBlocks::symmetrize`] first.
pub fn from_fourier(fb: &FourierBlocks) -> Result<Tensor3> {
    from_fourier_with_residue(fb).map(|(t, _)| t)
}

/// Like [`from_fourier`], also returning the largest imaginary residue
/// discarded by the final truncation to real values.
pub fn from_fourier_with_residue(fb: &FourierBlocks) -> Result<(Tensor3, f64)> {
    let (n, m, r) = (fb.n, fb.m, fb.r());
    let scale = fb.scale().max(1.0);
    let (block, deviation) = fb.conjugate_symmetry_deviation();
    if deviation > CONJUGATE_SYMMETRY_TOL * scale {
        return Err(Error::ConjugateSymmetry {
            block: block + 1,
            deviation,
        });
    }
    let mut buf: Vec<Complex64> = Vec::with_capacity(n * m * r);
    for i in 0..n {
        for j in 0..m {
            for b in &fb.blocks {
                buf.push(b[(i, j)]);
            }
        }
    }
    if r > 1 && !buf.is_empty() {
        let ifft = FftPlanner::new().plan_fft_inverse(r);
        ifft.process(&mut buf);
    }
    let inv_r = 1.0 / r as f64;
    let mut residue = 0.0_f64;
    let mut data = vec![0.0; n * m * r];
    for i in 0..n {
        for j in 0..m {
            for k in 0..r {
                let z = buf[(i * m + j) * r + k] * inv_r;
                residue = residue.max(z.im.abs());
                data[k * n * m + i * m + j] = z.re;
            }
        }
    }
    Ok((Tensor3::new(n, m, r, data)?, residue))
}

/// Per-structural-index tuples across Fourier blocks: `tuples[i][j]` is the
/// `i`-th eigenvalue (or singular value) of block `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TupleSpectrum {
    pub tuples: Vec<Vec<Complex64>>,
}

impl TupleSpectrum {
    fn from_columns(per_block: Vec<Vec<Complex64>>) -> Self {
        let count = per_block.first().map_or(0, Vec::len);
        let tuples = (0..count)
            .map(|i| per_block.iter().map(|col| col[i]).collect())
            .collect();
        TupleSpectrum { tuples }
    }

    /// All entries, tuple by tuple.
    pub fn entries(&self) -> impl Iterator<Item = &Complex64> {
        self.tuples.iter().flatten()
    }

    pub fn max_modulus(&self) -> f64 {
        self.entries().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Entries as `[re, im]` pairs, tuple by tuple.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        self.tuples
            .iter()
            .map(|t| t.iter().map(|z| [z.re, z.im]).collect())
            .collect()
    }
}

/// Ordering for eigenvalues within a block: descending modulus, ties broken
/// by descending real part, then descending imaginary part.
fn eigen_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    let tol = 1e-12 * a.norm().max(b.norm()).max(1.0);
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > tol {
        return mb.total_cmp(&ma);
    }
    if (a.re - b.re).abs() > tol {
        return b.re.total_cmp(&a.re);
    }
    if (a.im - b.im).abs() > tol {
        return b.im.total_cmp(&a.im);
    }
    std::cmp::Ordering::Equal
}

/// Stable insertion sort; the tolerance-based comparator is not a total order,
/// which rules out `sort_by`.
fn order_eigenpairs(values: &[Complex64]) -> Vec<usize> {
    let mut idx: Vec<usize> = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let pos = idx
            .iter()
            .position(|&p| eigen_order(&values[i], &values[p]) == std::cmp::Ordering::Less)
            .unwrap_or(idx.len());
        idx.insert(pos, i);
    }
    idx
}

fn require_square(t: &Tensor3, what: &str) -> Result<()> {
    if t.n() != t.m() {
        return Err(Error::DimensionMismatch(format!(
            "{what} needs a square tensor, got {}x{}x{}",
            t.n(),
            t.m(),
            t.r()
        )));
    }
    Ok(())
}

/// T-EVD: eigentuples and per-block eigenvector matrices `U_j` with `T_j = U_j D_j U_j⁻¹`.
pub fn teig(t: &Tensor3) -> Result<(TupleSpectrum, FourierBlocks)> {
    require_square(t, "T-EVD")?;
    let fb = to_fourier(t);
    let mut per_block = Vec::with_capacity(fb.r());
    let mut vectors = Vec::with_capacity(fb.r());
    for (j, b) in fb.blocks().iter().enumerate() {
        let (vals, vecs) = linalg::eigen_decomposition(b);
        let order = order_eigenpairs(&vals);
        let sorted_vals: Vec<Complex64> = order.iter().map(|&i| vals[i]).collect();
        let sorted_vecs = if order.is_empty() {
            vecs
        } else {
            ComplexMatrix::from_columns(
                &order.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>(),
            )
        };
        let sv = linalg::singular_values(&sorted_vecs);
        let condition = match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        };
        if condition > DEFECTIVE_COND {
            return Err(Error::Defective {
                block: j + 1,
                condition,
            });
        }
        per_block.push(sorted_vals);
        vectors.push(sorted_vecs);
    }
    Ok((TupleSpectrum::from_columns(per_block), FourierBlocks::new(vectors)?))
}

/// Eigentuples only; never fails on defective blocks.
pub fn eigentuples(t: &Tensor3) -> Result<TupleSpectrum> {
    require_square(t, "eigentuples")?;
    let fb = to_fourier(t);
    let per_block = fb
        .blocks()
        .iter()
        .map(|b| {
            let vals = linalg::eigenvalues(b);
            order_eigenpairs(&vals).into_iter().map(|i| vals[i]).collect()
        })
        .collect();
    Ok(TupleSpectrum::from_columns(per_block))
}

/// Result of a T-SVD: singular tuples and per-block factors `T_j = U_j S_j V_jᴴ`.
#[derive(Clone, Debug)]
pub struct TSvd {
    pub singular_tuples: TupleSpectrum,
    pub u: FourierBlocks,
    pub v: FourierBlocks,
}

pub fn tsvd(t: &Tensor3) -> Result<TSvd> {
    let fb = to_fourier(t);
    let mut per_block = Vec::with_capacity(fb.r());
    let mut us = Vec::with_capacity(fb.r());
    let mut vs = Vec::with_capacity(fb.r());
    for b in fb.blocks() {
        let dec = linalg::svd(b);
        per_block.push(dec.s.iter().map(|&x| Complex64::new(x, 0.0)).collect());
        us.push(dec.u);
        vs.push(dec.v);
    }
    Ok(TSvd {
        singular_tuples: TupleSpectrum::from_columns(per_block),
        u: FourierBlocks::new(us)?,
        v: FourierBlocks::new(vs)?,
    })
}

/// Maximum entrywise deviation from T-symmetry, `|t − tᵀ|`.
pub fn tsymmetry_deviation(t: &Tensor3) -> Result<f64> {
    require_square(t, "T-symmetry")?;
    Ok(t.max_abs_diff(&t.ttranspose()))
}

fn require_tsymmetric(t: &Tensor3) -> Result<()> {
    let deviation = tsymmetry_deviation(t)?;
    if deviation > 1e-10 * t.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { deviation });
    }
    Ok(())
}

/// Extreme Hermitian eigenvalues `(min, max_abs)` over all Fourier blocks.
fn hermitian_extremes(t: &Tensor3) -> (f64, f64) {
    let fb = to_fourier(t);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for j in 0..unique_block_count(fb.r()) {
        let ev = linalg::hermitian_eigenvalues(fb.block(j));
        if let (Some(&a), Some(&b)) = (ev.first(), ev.last()) {
            lo = lo.min(a);
            hi = hi.max(a.abs()).max(b.abs());
        }
    }
    (lo, hi)
}

/// T-positive definiteness: every Fourier block Hermitian positive definite
/// with `λ_min > 1e-10 · max|λ|`.
pub fn is_tpd(t: &Tensor3) -> Result<bool> {
    require_tsymmetric(t)?;
    let (lo, hi) = hermitian_extremes(t);
    Ok(hi > 0.0 && lo > 1e-10 * hi)
}

/// T-positive semidefiniteness: `λ_min ≥ −1e-10 · max|λ|` over all blocks.
pub fn is_tpsd(t: &Tensor3) -> Result<bool> {
    require_tsymmetric(t)?;
    let (lo, hi) = hermitian_extremes(t);
    Ok(lo >= -1e-10 * hi)
}

/// Largest eigentuple-entry modulus.
pub fn spectral_radius(a: &Tensor3) -> Result<f64> {
    require_square(a, "spectral radius")?;
    let fb = to_fourier(a);
    Ok((0..unique_block_count(fb.r()))
        .map(|j| linalg::spectral_radius(fb.block(j)))
        .fold(0.0_f64, f64::max))
}

/// Schur stability: every eigentuple entry has modulus `< 1 − 1e-9`.
pub fn is_stable(a: &Tensor3) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - 1e-9)
}
