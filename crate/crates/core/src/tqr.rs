//! Model-based T-product quadratic regulation: per-block Riccati solves in the
//! Fourier domain, assembled back into real tensors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::spectral::{self, to_fourier, unique_block_count, FourierBlocks};
use crate::tensor::Tensor3;

/// Relative residual accepted from the block Riccati solver.
pub const DARE_TOL: f64 = 1e-10;
/// Relative T-product residual accepted for an assembled solution.
pub const TRICCATI_TOL: f64 = 1e-8;

const VALUE_ITERATIONS: usize = 500;
const NEWTON_ITERATIONS: usize = 50;
const STABLE_RADIUS: f64 = 1.0 - 1e-12;

/// Orthonormal basis of the controllable subspace of `(a, b)` (Krylov
/// sequence with rank decisions relative to `max(‖A‖₂, ‖B‖₂)`).
fn controllable_basis(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = a.nrows();
    let sigma = |m: &ComplexMatrix| linalg::singular_values(m).first().copied().unwrap_or(0.0);
    let scale = sigma(a).max(sigma(b));
    let mut basis = ComplexMatrix::zeros(n, 0);
    let mut frontier = b.clone();
    while basis.ncols() < n && frontier.ncols() > 0 {
        let residual = &frontier - &basis * (basis.adjoint() * &frontier);
        let fresh = linalg::range_basis(&residual, Some(scale));
        if fresh.ncols() == 0 {
            break;
        }
        // Second orthogonalization pass against the accepted basis.
        let fresh = linalg::range_basis(&(&fresh - &basis * (basis.adjoint() * &fresh)), None);
        let mut next = ComplexMatrix::zeros(n, basis.ncols() + fresh.ncols());
        next.columns_mut(0, basis.ncols()).copy_from(&basis);
        next.columns_mut(basis.ncols(), fresh.ncols()).copy_from(&fresh);
        basis = next;
        frontier = a * fresh;
    }
    basis
}

/// Stabilizability of one block pair: the dynamics outside the controllable
/// subspace must be Schur stable.
pub fn is_stabilizable_block(a: &ComplexMatrix, b: &ComplexMatrix) -> bool {
    let c = controllable_basis(a, b);
    let u = linalg::orthogonal_complement(&c);
    if u.ncols() == 0 {
        return true;
    }
    let residual = u.adjoint() * a * &u;
    linalg::spectral_radius(&residual) < 1.0
}

/// Detectability of `(q, a)`, i.e. stabilizability of `(aᴴ, qᴴ)`.
pub fn is_detectable_block(q: &ComplexMatrix, a: &ComplexMatrix) -> bool {
    is_stabilizable_block(&a.adjoint(), &q.adjoint())
}

fn require_pair(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.n() != a.m() || a.n() != b.n() || a.r() != b.r() {
        return Err(Error::DimensionMismatch(format!(
            "incompatible pair: A is {:?}, B is {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Every Fourier block pair `(A_j, B_j)` stabilizable.
pub fn is_stabilizable(a: &Tensor3, b: &Tensor3) -> Result<bool> {
    require_pair(a, b)?;
    let (fa, fb) = (to_fourier(a), to_fourier(b));
    Ok((0..unique_block_count(a.r())).all(|j| is_stabilizable_block(fa.block(j), fb.block(j))))
}

/// `(q, a)` detectable, i.e. `(aᵀ, qᵀ)` stabilizable.
pub fn is_detectable(q: &Tensor3, a: &Tensor3) -> Result<bool> {
    if q.n() != q.m() || q.n() != a.n() || q.r() != a.r() {
        return Err(Error::DimensionMismatch(format!(
            "incompatible pair: Q is {:?}, A is {:?}",
            q.dims(),
            a.dims()
        )));
    }
    is_stabilizable(&a.ttranspose(), &q.ttranspose())
}

/// `(R + BᴴPB)⁻¹ BᴴPA`.
pub fn dare_gain(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    r: &ComplexMatrix,
    p: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let bp = b.adjoint() * p;
    let lhs = r + &bp * b;
    linalg::solve(&lhs, &(bp * a))
        .ok_or_else(|| Error::NumericalFailure("R + BᴴPB is singular".into()))
}

/// Right-hand side of the Riccati equation at `p`.
fn riccati_map(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
    p: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let k = dare_gain(a, b, r, p)?;
    let pa = p * a;
    Ok(a.adjoint() * &pa - a.adjoint() * p * b * k + q)
}

/// `‖RHS(P) − P‖_F / (1 + ‖P‖_F)`.
pub fn dare_residual(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
    p: &ComplexMatrix,
) -> Result<f64> {
    let rhs = riccati_map(a, b, q, r, p)?;
    Ok(linalg::frobenius(&(rhs - p)) / (1.0 + linalg::frobenius(p)))
}

/// Solves `X = Fᴴ X F + W` for Schur-stable `F` by Smith doubling.
pub(crate) fn stein(f: &ComplexMatrix, w: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut x = w.clone();
    let mut g = f.clone();
    for _ in 0..64 {
        let step = g.adjoint() * &x * &g;
        let done = linalg::frobenius(&step) <= 1e-17 * linalg::frobenius(&x).max(f64::MIN_POSITIVE);
        x += step;
        if done {
            return Ok(linalg::hermitian_part(&x));
        }
        g = &g * &g;
        if !g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: 64,
        residual: f64::NAN,
    })
}

fn validate_block(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "Riccati block: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// Stabilizing solution of `P = AᴴPA − AᴴPB(R + BᴴPB)⁻¹BᴴPA + Q`.
///
/// Value iteration from `P₀ = Q` until the induced gain stabilizes, then
/// Newton–Kleinman refinement.
pub fn solve_dare_block(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    solve_dare_block_from(a, b, q, r, q)
}

/// [`solve_dare_block`] with an explicit starting point for the value iteration.
pub fn solve_dare_block_from(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
    p0: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    validate_block(a, b, q, r)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let mut p = linalg::hermitian_part(p0);
    let mut k = dare_gain(a, b, r, &p)?;
    let mut iterations = 0;
    while linalg::spectral_radius(&(a - b * &k)) >= STABLE_RADIUS {
        if iterations == VALUE_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations,
                residual: dare_residual(a, b, q, r, &p)?,
            });
        }
        p = linalg::hermitian_part(&riccati_map(a, b, q, r, &p)?);
        k = dare_gain(a, b, r, &p)?;
        iterations += 1;
    }

    for _ in 0..NEWTON_ITERATIONS {
        let f = a - b * &k;
        let w = q + k.adjoint() * r * &k;
        let next = stein(&f, &w)?;
        let change = linalg::frobenius(&(&next - &p));
        p = next;
        k = dare_gain(a, b, r, &p)?;
        if change <= 1e-15 * (1.0 + linalg::frobenius(&p)) {
            break;
        }
    }
    let residual = dare_residual(a, b, q, r, &p)?;
    if residual > DARE_TOL || linalg::spectral_radius(&(a - b * &k)) >= 1.0 {
        return Err(Error::NonConvergence {
            iterations: iterations + NEWTON_ITERATIONS,
            residual,
        });
    }
    Ok(p)
}

#[derive(Clone, Debug, Serialize)]
pub struct TqrSolution {
    pub p: Tensor3,
    pub k: Tensor3,
    /// Relative Riccati residual of each Fourier block.
    pub block_residuals: Vec<f64>,
    /// Spectral radius of `A_j − B_j K_j` for each Fourier block.
    pub closed_loop_radii: Vec<f64>,
    /// T-product residual of the assembled `P`.
    pub residual: f64,
}

/// Validates the weight pair: `q` T-symmetric T-PSD (n×n×r), `rr` T-symmetric T-PD (m×m×r).
pub fn validate_weights(q: &Tensor3, rr: &Tensor3, n: usize, m: usize, r: usize) -> Result<()> {
    if q.dims() != (n, n, r) {
        return Err(Error::InvalidWeights(format!("Q must be {n}x{n}x{r}, got {:?}", q.dims())));
    }
    if rr.dims() != (m, m, r) {
        return Err(Error::InvalidWeights(format!("R must be {m}x{m}x{r}, got {:?}", rr.dims())));
    }
    let wrap = |what: &str, e: Error| Error::InvalidWeights(format!("{what}: {e}"));
    if !spectral::is_tpsd(q).map_err(|e| wrap("Q", e))? {
        return Err(Error::InvalidWeights("Q is not T-positive semidefinite".into()));
    }
    if !spectral::is_tpd(rr).map_err(|e| wrap("R", e))? {
        return Err(Error::InvalidWeights("R is not T-positive definite".into()));
    }
    Ok(())
}

/// Optimal T-product quadratic regulator for `x⁺ = A⋆x + B⋆u`, `u = −K⋆x`.
pub fn solve_tqr(a: &Tensor3, b: &Tensor3, q: &Tensor3, rr: &Tensor3) -> Result<TqrSolution> {
    require_pair(a, b)?;
    let (n, m, r) = (a.n(), b.m(), a.r());
    validate_weights(q, rr, n, m, r)?;
    if !is_stabilizable(a, b)? {
        return Err(Error::Precondition("(A, B) is not stabilizable".into()));
    }
    if !is_detectable(q, a)? {
        return Err(Error::Precondition("(Q, A) is not detectable".into()));
    }
    let (fa, fb, fq, fr) = (to_fourier(a), to_fourier(b), to_fourier(q), to_fourier(rr));
    let mut ps = Vec::new();
    let mut ks = Vec::new();
    let mut block_residuals = Vec::new();
    let mut closed_loop_radii = Vec::new();
    for j in 0..unique_block_count(r) {
        let (aj, bj, qj, rj) = (fa.block(j), fb.block(j), fq.block(j), fr.block(j));
        let p = solve_dare_block(aj, bj, qj, rj).map_err(|e| e.in_block(j + 1))?;
        let k = dare_gain(aj, bj, rj, &p).map_err(|e| e.in_block(j + 1))?;
        block_residuals.push(dare_residual(aj, bj, qj, rj, &p)?);
        closed_loop_radii.push(linalg::spectral_radius(&(aj - bj * &k)));
        ps.push(p);
        ks.push(k);
    }
    let p = spectral::from_fourier(&FourierBlocks::from_unique(ps, r)?)?;
    let k = spectral::from_fourier(&FourierBlocks::from_unique(ks, r)?)?;
    // Exact symmetry, free of transform round-off.
    let p = &(&p + &p.ttranspose()) * 0.5;
    let residual = is_riccati_solution(&p, a, b, q, rr)?;
    if residual > TRICCATI_TOL {
        return Err(Error::NumericalFailure(format!(
            "assembled Riccati residual {residual:e} exceeds {TRICCATI_TOL:e}"
        )));
    }
    Ok(TqrSolution {
        p,
        k,
        block_residuals,
        closed_loop_radii,
        residual,
    })
}

/// `‖RHS − P‖_F / (1 + ‖P‖_F)` of the T-algebraic Riccati equation, computed
/// with T-products only.
pub fn is_riccati_solution(
    p: &Tensor3,
    a: &Tensor3,
    b: &Tensor3,
    q: &Tensor3,
    rr: &Tensor3,
) -> Result<f64> {
    let at = a.ttranspose();
    let bt = b.ttranspose();
    let pa = p.tprod(a)?;
    let pb = p.tprod(b)?;
    let inner = rr + &bt.tprod(&pb)?;
    let inv = inner.tinverse()?;
    let correction = at.tprod(&pb)?.tprod(&inv)?.tprod(&bt.tprod(&pa)?)?;
    let rhs = &(&at.tprod(&pa)? - &correction) + q;
    Ok((&rhs - p).frobenius_norm() / (1.0 + p.frobenius_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn cm(m: nalgebra::DMatrix<f64>) -> ComplexMatrix {
        linalg::to_complex(&m)
    }

    #[test]
    fn scalar_dare_matches_quadratic_root() {
        // p = a²p − a²p²b²/(r + b²p) + q  ⇔  b²p² + (r − a²r − qb²)p − qr = 0.
        let (a, b, q, r) = (0.5_f64, 1.0_f64, 1.0_f64, 1.0_f64);
        let f = |p: f64| b * b * p * p + (r - a * a * r - q * b * b) * p - q * r;
        let (mut lo, mut hi) = (0.0_f64, 100.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let p = solve_dare_block(&cm(dmatrix![a]), &cm(dmatrix![b]), &cm(dmatrix![q]), &cm(dmatrix![r])).unwrap();
        assert!((p[(0, 0)].re - lo).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics_give_q() {
        let q = cm(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let p = solve_dare_block(
            &ComplexMatrix::zeros(2, 2),
            &cm(dmatrix![1.0; 0.0]),
            &q,
            &cm(dmatrix![1.0]),
        )
        .unwrap();
        assert!(linalg::max_abs(&(p - q)) < 1e-14);
    }

    #[test]
    fn unstabilizable_pair_detected() {
        let a = cm(dmatrix![2.0, 0.0; 0.0, 0.5]);
        let b = cm(dmatrix![0.0; 1.0]);
        assert!(!is_stabilizable_block(&a, &b));
        assert!(is_stabilizable_block(&cm(dmatrix![0.5, 0.0; 0.0, 2.0]), &b));
        assert!(!is_stabilizable_block(&cm(dmatrix![2.0]), &cm(dmatrix![0.0])));
        assert!(is_stabilizable_block(&cm(dmatrix![2.0, 1.0; 0.0, 2.0]), &b));
    }

    #[test]
    fn tensor_examples() {
        let i = Tensor3::identity(2, 3);
        let z = Tensor3::zeros(2, 2, 3);
        assert!(is_stabilizable(&(&i * 2.0), &i).unwrap());
        assert!(!is_stabilizable(&(&i * 2.0), &z).unwrap());
        assert!(is_detectable(&i, &(&i * 5.0)).unwrap());
        assert!(!is_detectable(&z, &(&i * 2.0)).unwrap());
        let sol = solve_tqr(&z, &i, &i, &i).unwrap();
        assert!(sol.k.max_abs() < 1e-14);
        assert!(sol.p.max_abs_diff(&i) < 1e-14);
    }

    #[test]
    fn riccati_residual_of_zero() {
        let i = Tensor3::identity(3, 2);
        let res = is_riccati_solution(&Tensor3::zeros(3, 3, 2), &i, &i, &i, &i).unwrap();
        assert!((res - 3.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn invalid_weights_rejected() {
        let i = Tensor3::identity(2, 2);
        let mut bad = Tensor3::identity(2, 2);
        bad.set(0, 0, 0, -1.0);
        assert!(matches!(solve_tqr(&i, &i, &i, &bad), Err(Error::InvalidWeights(_))));
        assert!(matches!(solve_tqr(&i, &i, &bad, &i), Err(Error::InvalidWeights(_))));
    }
}
