//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::tensor::RealMatrix;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative singular-value threshold shared by every numerical rank decision:
/// `σ > max(rows, cols) · σ_ref · RANK_TOL`.
pub const RANK_TOL: f64 = 1e-10;

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &ComplexMatrix) -> RealMatrix {
    m.map(|z| z.re)
}

pub fn imag_part(m: &ComplexMatrix) -> RealMatrix {
    m.map(|z| z.im)
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(M + Mᴴ)/2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Largest entry of `|M − Mᴴ|`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Thin SVD `M = U diag(s) Vᴴ` with `s` in descending order.
pub struct Svd<T: nalgebra::Scalar> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

pub trait SvdScalar: nalgebra::ComplexField + faer::traits::ComplexField + Copy {
    fn re(self) -> f64;
}

impl SvdScalar for f64 {
    fn re(self) -> f64 {
        self
    }
}

impl SvdScalar for Complex64 {
    fn re(self) -> f64 {
        self.re
    }
}

// nalgebra's bidiagonal SVD can return a decomposition off by 1e-3 on
// rank-deficient block-circulant matrices, so faer does the work.
pub fn svd<T: SvdScalar>(m: &DMatrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::from_element(rows, 0, T::zero_impl()),
            s: Vec::new(),
            v: DMatrix::from_element(cols, 0, T::zero_impl()),
        };
    }
    let fm = faer::Mat::<T>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = fm.thin_svd().expect("SVD did not converge");
    let (u, v, sd) = (dec.U(), dec.V(), dec.S().column_vector());
    Svd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        s: (0..k).map(|i| sd[i].re()).collect(),
        v: DMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
    }
}

pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    svd(m).s
}

/// Numerical rank with the shared threshold, using `sigma_ref` as the scale
/// (pass `None` to use the matrix's own largest singular value).
pub fn rank_with_scale(m: &ComplexMatrix, sigma_ref: Option<f64>) -> usize {
    let s = singular_values(m);
    let scale = sigma_ref.unwrap_or_else(|| s.first().copied().unwrap_or(0.0));
    let tol = m.nrows().max(m.ncols()) as f64 * scale * RANK_TOL;
    s.iter().filter(|&&x| x > tol).count()
}

pub fn rank(m: &ComplexMatrix) -> usize {
    rank_with_scale(m, None)
}

pub fn rank_real(m: &RealMatrix) -> usize {
    let s = svd(m).s;
    let tol = m.nrows().max(m.ncols()) as f64 * s.first().copied().unwrap_or(0.0) * RANK_TOL;
    s.iter().filter(|&&x| x > tol).count()
}

fn pinv_generic<T: SvdScalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    let mut dec = svd(m);
    let tol = rows.max(cols) as f64 * dec.s.first().copied().unwrap_or(0.0) * RANK_TOL;
    let keep = dec.s.iter().filter(|&&x| x > tol).count();
    for (k, &x) in dec.s.iter().enumerate().take(keep) {
        let inv = T::from_f64_impl(1.0 / x);
        dec.v.column_mut(k).iter_mut().for_each(|z| *z = *z * inv);
    }
    dec.v.columns(0, keep) * dec.u.columns(0, keep).adjoint()
}

/// Moore–Penrose pseudo-inverse with the shared rank threshold.
pub fn pinv(m: &ComplexMatrix) -> ComplexMatrix {
    pinv_generic(m)
}

pub fn pinv_real(m: &RealMatrix) -> RealMatrix {
    pinv_generic(m)
}

/// Eigenvalues of a general complex matrix from its complex Schur form.
pub fn eigenvalues(m: &ComplexMatrix) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = Schur::new(m.clone()).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn spectral_radius(m: &ComplexMatrix) -> f64 {
    eigenvalues(m).iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Eigenvalues and unit-norm eigenvectors (as columns) of a complex matrix.
///
/// Eigenvectors of the triangular Schur factor are obtained by back
/// substitution; near-equal diagonal entries are separated by a small
/// perturbation of the pivot, so defective input shows up as a badly
/// conditioned eigenvector matrix rather than a failure.
pub fn eigen_decomposition(m: &ComplexMatrix) -> (Vec<Complex64>, ComplexMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), ComplexMatrix::zeros(0, 0));
    }
    let (q, t) = Schur::new(m.clone()).unpack();
    let lambdas: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = max_abs(&t).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut x = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut denom = t[(i, i)] - lambdas[k];
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            x[(i, k)] = -acc / denom;
        }
    }
    let mut v = q * x;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            for z in v.column_mut(k).iter_mut() {
                *z /= nrm;
            }
        }
    }
    (lambdas, v)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn symmetric_eigenvalues(m: &RealMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()).scale(0.5);
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_symmetric_eigenvalue(m: &RealMatrix) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Orthonormal basis (columns) of the range of `m`.
pub fn range_basis(m: &ComplexMatrix, sigma_ref: Option<f64>) -> ComplexMatrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return ComplexMatrix::zeros(rows, 0);
    }
    let dec = svd(m);
    let smax = sigma_ref.unwrap_or_else(|| dec.s.first().copied().unwrap_or(0.0));
    let tol = rows.max(cols) as f64 * smax * RANK_TOL;
    let keep = dec.s.iter().filter(|&&x| x > tol).count();
    dec.u.columns(0, keep).into_owned()
}

/// Orthonormal completion: columns spanning the orthogonal complement of the
/// (orthonormal) columns of `basis` in `C^n`.
pub fn orthogonal_complement(basis: &ComplexMatrix) -> ComplexMatrix {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return ComplexMatrix::identity(n, n);
    }
    if k >= n {
        return ComplexMatrix::zeros(n, 0);
    }
    // Project the identity onto the complement and keep its dominant directions.
    let proj = ComplexMatrix::identity(n, n) - basis * basis.adjoint();
    let (vals, vecs) = hermitian_eigen(&proj);
    let cols: Vec<_> = (0..n)
        .rev()
        .take(n - k)
        .filter(|&i| vals[i] > 0.5)
        .map(|i| vecs.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        ComplexMatrix::zeros(n, 0)
    } else {
        ComplexMatrix::from_columns(&cols)
    }
}

/// Solves `A x = b` for square `A` by LU; `None` when `A` is singular.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Option<ComplexMatrix> {
    a.clone().lu().solve(b)
}

pub fn dvector_max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
