//! A small dense semidefinite solver for the feasibility and trace programs
//! used by the informativity tests.
//!
//! Problems are posed in the "dual" standard form
//!
//! ```text
//!     maximize  bᵀy   subject to   C_k − Σ_i y_i A_{k,i} ⪰ 0,   c − G y ≥ 0
//! ```
//!
//! and solved by an infeasible-start primal-dual path-following method with
//! the HKM search direction and a Mehrotra predictor-corrector.

use std::time::Instant;

use nalgebra::{DVector, QR};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, RANK_TOL};
use crate::tensor::RealMatrix;

/// Smallest accepted eigenvalue of a strict-feasibility certificate.
pub const STRICT_MARGIN: f64 = 1e-6;
/// A converged max-min-eigenvalue program at or below this level is infeasible.
pub const INFEASIBLE_LEVEL: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const UNBOUNDED_NORM: f64 = 1e12;

/// `F(x) = base + Σ_i x_i · coeff_i`, all symmetric of one dimension.
///
/// Coefficients are stored column-wise as vectorized matrices (`d² × p`).
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrixMap {
    dim: usize,
    base: RealMatrix,
    coeffs: RealMatrix,
}

impl AffineMatrixMap {
    pub fn new(base: RealMatrix, coeffs: Vec<RealMatrix>) -> Result<Self> {
        let d = base.nrows();
        if base.ncols() != d {
            return Err(Error::DimensionMismatch("affine map base must be square".into()));
        }
        check_symmetric(&base)?;
        let mut stacked = RealMatrix::zeros(d * d, coeffs.len());
        for (i, c) in coeffs.iter().enumerate() {
            if c.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient {} is {}x{}, expected {}x{}",
                    i,
                    c.nrows(),
                    c.ncols(),
                    d,
                    d
                )));
            }
            check_symmetric(c)?;
            stacked.column_mut(i).copy_from_slice(c.as_slice());
        }
        Ok(AffineMatrixMap {
            dim: d,
            base,
            coeffs: stacked,
        })
    }

    /// Builds a map from already-vectorized coefficients without re-checking symmetry.
    pub(crate) fn from_stacked(base: RealMatrix, coeffs: RealMatrix) -> Self {
        let dim = base.nrows();
        debug_assert_eq!(coeffs.nrows(), dim * dim);
        AffineMatrixMap { dim, base, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nvars(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn base(&self) -> &RealMatrix {
        &self.base
    }

    pub fn coefficient(&self, i: usize) -> RealMatrix {
        RealMatrix::from_column_slice(self.dim, self.dim, self.coeffs.column(i).as_slice())
    }

    /// The linear part applied to `x`, without the base.
    fn linear(&self, x: &DVector<f64>) -> RealMatrix {
        let v = &self.coeffs * x;
        RealMatrix::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<RealMatrix> {
        if x.len() != self.nvars() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} variables, got {}",
                self.nvars(),
                x.len()
            )));
        }
        Ok(&self.base + self.linear(x))
    }

    /// Substitutes `x = x0 + N z`.
    fn restrict(&self, x0: &DVector<f64>, null: &RealMatrix) -> AffineMatrixMap {
        AffineMatrixMap {
            dim: self.dim,
            base: &self.base + self.linear(x0),
            coeffs: &self.coeffs * null,
        }
    }
}

fn check_symmetric(m: &RealMatrix) -> Result<()> {
    let scale = m.amax().max(1.0);
    let deviation = (m - m.transpose()).amax();
    if deviation > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { deviation });
    }
    Ok(())
}

/// Linear equality constraints `matrix · x = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEqualities {
    pub matrix: RealMatrix,
    pub rhs: DVector<f64>,
}

impl LinearEqualities {
    pub fn new(matrix: RealMatrix, rhs: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch("equality rows and right-hand side differ".into()));
        }
        Ok(LinearEqualities { matrix, rhs })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SdpStatus {
    StrictlyFeasible,
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub variables: DVector<f64>,
    pub status: SdpStatus,
    /// Smallest eigenvalue over all constraint matrices at `variables`.
    pub margin: f64,
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LmiOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub margin: f64,
    /// Bound on each reduced coordinate in feasibility searches.
    pub box_bound: f64,
    pub deadline: Option<Instant>,
    pub memory_budget: Option<u64>,
}

impl Default for LmiOptions {
    fn default() -> Self {
        LmiOptions {
            max_iterations: 200,
            tolerance: 1e-9,
            margin: STRICT_MARGIN,
            box_bound: 1e4,
            deadline: None,
            memory_budget: None,
        }
    }
}

impl LmiOptions {
    pub(crate) fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::Timeout),
            _ => Ok(()),
        }
    }

    /// Fails with `ResourceLimit` when a problem of this shape would not fit the budget.
    pub fn check_budget(&self, nvars: usize, dims: &[usize]) -> Result<()> {
        if let Some(budget) = self.memory_budget {
            let required = estimate_bytes(nvars, dims);
            if required > budget {
                return Err(Error::ResourceLimit {
                    required_bytes: required,
                    budget_bytes: budget,
                });
            }
        }
        Ok(())
    }
}

/// Rough peak working set of a solve: coefficient storage (raw and reduced),
/// the Schur factor matrix, the Schur complement and the elimination basis.
pub fn estimate_bytes(nvars: usize, dims: &[usize]) -> u64 {
    let p = nvars as u64;
    let sq: u64 = dims.iter().map(|&d| (d * d) as u64).sum();
    8 * (3 * p * sq + 3 * p * p + 12 * sq)
}

/// `[[Re h, −Im h], [Im h, Re h]]`.
pub fn realify(h: &ComplexMatrix) -> Result<RealMatrix> {
    let scale = linalg::max_abs(h).max(1.0);
    let deviation = linalg::hermitian_deviation(h);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(realify_unchecked(&linalg::hermitian_part(h)))
}

pub(crate) fn realify_unchecked(h: &ComplexMatrix) -> RealMatrix {
    let n = h.nrows();
    let mut out = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Orthonormal basis of the null space of `e` (columns) with the shared rank rule.
pub(crate) fn null_space(e: &RealMatrix) -> RealMatrix {
    let p = e.ncols();
    if e.nrows() == 0 || p == 0 {
        return RealMatrix::identity(p, p);
    }
    let dec = linalg::svd(e);
    let tol = e.nrows().max(p) as f64 * dec.s.first().copied().unwrap_or(0.0) * RANK_TOL;
    let keep = dec.s.iter().filter(|&&x| x > tol).count();
    if keep == 0 {
        return RealMatrix::identity(p, p);
    }
    if keep >= p {
        return RealMatrix::zeros(p, 0);
    }
    let rows = dec.v.columns(0, keep).into_owned();
    let qr = QR::new(rows);
    let mut qt = RealMatrix::identity(p, p);
    qr.q_tr_mul(&mut qt);
    qt.rows(keep, p - keep).transpose()
}

/// Reduces the constraints to the affine subspace cut out by the equalities.
///
/// Returns `None` when the equalities are inconsistent.
#[allow(clippy::type_complexity)]
fn eliminate(
    constraints: &[AffineMatrixMap],
    nvars: usize,
    eq: Option<&LinearEqualities>,
) -> Result<Option<(Vec<AffineMatrixMap>, DVector<f64>, RealMatrix)>> {
    let (x0, null) = match eq {
        None => (DVector::zeros(nvars), RealMatrix::identity(nvars, nvars)),
        Some(eq) => {
            if eq.matrix.ncols() != nvars {
                return Err(Error::DimensionMismatch(format!(
                    "equalities act on {} variables, constraints on {}",
                    eq.matrix.ncols(),
                    nvars
                )));
            }
            let x0 = linalg::pinv_real(&eq.matrix) * &eq.rhs;
            let resid = (&eq.matrix * &x0 - &eq.rhs).norm();
            if resid > 1e-9 * (1.0 + eq.rhs.norm()) {
                return Ok(None);
            }
            (x0, null_space(&eq.matrix))
        }
    };
    let reduced = constraints.iter().map(|c| c.restrict(&x0, &null)).collect();
    Ok(Some((reduced, x0, null)))
}

fn common_nvars(constraints: &[AffineMatrixMap]) -> Result<usize> {
    let p = constraints.first().map_or(0, |c| c.nvars());
    if constraints.iter().any(|c| c.nvars() != p) {
        return Err(Error::DimensionMismatch("constraints disagree on the variable count".into()));
    }
    Ok(p)
}

fn min_eigenvalue(constraints: &[AffineMatrixMap], x: &DVector<f64>) -> f64 {
    constraints
        .iter()
        .map(|c| linalg::min_symmetric_eigenvalue(&(&c.base + c.linear(x))))
        .fold(f64::INFINITY, f64::min)
}

/// Searches for `x` with every `F_k(x) ≻ 0` (margin `opts.margin`) on the
/// affine set defined by `eq`.
///
/// Solves `max t` subject to `F_k(x) − tI ⪰ 0` with each reduced coordinate
/// boxed by `opts.box_bound`; the verdict is read off the actual smallest
/// eigenvalue at the returned point.
pub fn find_strictly_feasible(
    constraints: &[AffineMatrixMap],
    eq: Option<&LinearEqualities>,
    opts: &LmiOptions,
) -> Result<SdpSolution> {
    let nvars = common_nvars(constraints)?;
    let dims: Vec<usize> = constraints.iter().map(|c| c.dim()).collect();
    opts.check_budget(nvars, &dims)?;
    let Some((reduced, x0, null)) = eliminate(constraints, nvars, eq)? else {
        return Ok(SdpSolution {
            variables: DVector::zeros(nvars),
            status: SdpStatus::Infeasible,
            margin: f64::NEG_INFINITY,
            objective: f64::NEG_INFINITY,
            duality_gap: 0.0,
            iterations: 0,
        });
    };
    if constraints.is_empty() {
        return Ok(SdpSolution {
            variables: x0,
            status: SdpStatus::StrictlyFeasible,
            margin: f64::INFINITY,
            objective: f64::INFINITY,
            duality_gap: 0.0,
            iterations: 0,
        });
    }
    let q = null.ncols();
    let blocks = reduced
        .iter()
        .map(|c| {
            let d = c.dim();
            let mut a = RealMatrix::zeros(d * d, q + 1);
            a.columns_mut(0, q).copy_from(&(-&c.coeffs));
            a.column_mut(q)
                .copy_from_slice(RealMatrix::identity(d, d).as_slice());
            Cone {
                c: c.base.clone(),
                a,
            }
        })
        .collect();
    let mut g = RealMatrix::zeros(2 * q, q + 1);
    for i in 0..q {
        g[(i, i)] = 1.0;
        g[(q + i, i)] = -1.0;
    }
    let lp = (q > 0).then(|| Polyhedron {
        c: DVector::from_element(2 * q, opts.box_bound),
        g,
    });
    let mut b = DVector::zeros(q + 1);
    b[q] = 1.0;
    let problem = DualProblem { blocks, lp, b };
    let out = solve(&problem, opts)?;

    let z = out.y.rows(0, q).into_owned();
    let x = &x0 + &null * &z;
    let margin = min_eigenvalue(constraints, &x);
    let status = if margin >= opts.margin {
        SdpStatus::StrictlyFeasible
    } else if out.converged {
        SdpStatus::Infeasible
    } else {
        SdpStatus::NumericalFailure
    };
    Ok(SdpSolution {
        variables: x,
        status,
        margin,
        objective: out.dobj,
        duality_gap: out.gap,
        iterations: out.iterations,
    })
}

/// Maximizes `objectiveᵀ x` subject to `F_k(x) ⪰ 0` and optional equalities.
pub fn maximize_linear(
    constraints: &[AffineMatrixMap],
    eq: Option<&LinearEqualities>,
    objective: &DVector<f64>,
    opts: &LmiOptions,
) -> Result<SdpSolution> {
    let nvars = common_nvars(constraints)?;
    if objective.len() != nvars {
        return Err(Error::DimensionMismatch("objective length differs from variable count".into()));
    }
    let dims: Vec<usize> = constraints.iter().map(|c| c.dim()).collect();
    opts.check_budget(nvars, &dims)?;
    let Some((reduced, x0, null)) = eliminate(constraints, nvars, eq)? else {
        return Ok(SdpSolution {
            variables: DVector::zeros(nvars),
            status: SdpStatus::Infeasible,
            margin: f64::NEG_INFINITY,
            objective: f64::NEG_INFINITY,
            duality_gap: 0.0,
            iterations: 0,
        });
    };
    let blocks = reduced
        .iter()
        .map(|c| Cone {
            c: c.base.clone(),
            a: -&c.coeffs,
        })
        .collect();
    let b = null.transpose() * objective;
    let problem = DualProblem { blocks, lp: None, b };
    let out = solve(&problem, opts)?;
    let x = &x0 + &null * &out.y;
    let margin = min_eigenvalue(constraints, &x);
    if out.unbounded {
        return Err(Error::NumericalFailure(format!(
            "objective appears unbounded (|y| = {:e} after {} iterations)",
            out.y.norm(),
            out.iterations
        )));
    }
    let status = if out.converged {
        SdpStatus::Optimal
    } else {
        SdpStatus::NumericalFailure
    };
    Ok(SdpSolution {
        objective: objective.dot(&x),
        variables: x,
        status,
        margin,
        duality_gap: out.gap,
        iterations: out.iterations,
    })
}

/// Scalar field of the matrix variable in [`maximize_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

/// Basis of real symmetric or complex Hermitian `n×n` matrices.
pub fn hermitian_basis(n: usize, field: Field) -> Vec<ComplexMatrix> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::new();
    for a in 0..n {
        let mut e = ComplexMatrix::zeros(n, n);
        e[(a, a)] = one;
        out.push(e);
    }
    for a in 0..n {
        for b in a + 1..n {
            let mut e = ComplexMatrix::zeros(n, n);
            e[(a, b)] = one;
            e[(b, a)] = one;
            out.push(e);
            if field == Field::Complex {
                let mut e = ComplexMatrix::zeros(n, n);
                e[(a, b)] = i;
                e[(b, a)] = -i;
                out.push(e);
            }
        }
    }
    out
}

fn to_real_symmetric(h: &ComplexMatrix, field: Field) -> Result<RealMatrix> {
    match field {
        Field::Complex => realify(h),
        Field::Real => {
            let re = linalg::real_part(&linalg::hermitian_part(h));
            let dev = linalg::imag_part(h).amax();
            if dev > HERMITIAN_TOL * linalg::max_abs(h).max(1.0) {
                return Err(Error::NotHermitian { deviation: dev });
            }
            Ok(re)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TraceSolution {
    pub p: ComplexMatrix,
    pub solution: SdpSolution,
}

/// `max trace(P)` subject to `P = Pᴴ ⪰ 0` and `L(P) ⪯ 0`, where `L` is affine.
pub fn maximize_trace(
    p_dim: usize,
    field: Field,
    l: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    opts: &LmiOptions,
) -> Result<TraceSolution> {
    let basis = hermitian_basis(p_dim, field);
    let nvars = basis.len();
    let l0 = l(&ComplexMatrix::zeros(p_dim, p_dim));
    if l0.nrows() != l0.ncols() {
        return Err(Error::DimensionMismatch("L(P) must be square".into()));
    }
    let factor = if field == Field::Complex { 2 } else { 1 };
    let dl = factor * l0.nrows();
    let dp = factor * p_dim;
    opts.check_budget(nvars, &[dl, dp])?;

    let base_l = -to_real_symmetric(&l0, field)?;
    let mut coeff_l = RealMatrix::zeros(dl * dl, nvars);
    let mut coeff_p = RealMatrix::zeros(dp * dp, nvars);
    let mut objective = DVector::zeros(nvars);
    for (i, e) in basis.iter().enumerate() {
        opts.check_deadline()?;
        let li = l(e) - &l0;
        if li.shape() != l0.shape() {
            return Err(Error::DimensionMismatch("L(P) changes shape".into()));
        }
        let ri = -to_real_symmetric(&li, field)?;
        coeff_l.column_mut(i).copy_from_slice(ri.as_slice());
        let pi = to_real_symmetric(e, field)?;
        coeff_p.column_mut(i).copy_from_slice(pi.as_slice());
        objective[i] = e.trace().re;
    }
    let constraints = [
        AffineMatrixMap::from_stacked(base_l, coeff_l),
        AffineMatrixMap::from_stacked(RealMatrix::zeros(dp, dp), coeff_p),
    ];
    let solution = maximize_linear(&constraints, None, &objective, opts)?;
    let mut p = ComplexMatrix::zeros(p_dim, p_dim);
    for (i, e) in basis.iter().enumerate() {
        p += e.map(|z| z * solution.variables[i]);
    }
    Ok(TraceSolution { p, solution })
}

// ---------------------------------------------------------------------------
// Interior-point core

struct Cone {
    c: RealMatrix,
    /// Vectorized `A_i` as columns.
    a: RealMatrix,
}

struct Polyhedron {
    c: DVector<f64>,
    g: RealMatrix,
}

struct DualProblem {
    blocks: Vec<Cone>,
    lp: Option<Polyhedron>,
    b: DVector<f64>,
}

struct Outcome {
    y: DVector<f64>,
    dobj: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    unbounded: bool,
}

fn mat(v: &DVector<f64>, d: usize) -> RealMatrix {
    RealMatrix::from_column_slice(d, d, v.as_slice())
}

fn sym(m: RealMatrix) -> RealMatrix {
    (&m + m.transpose()) * 0.5
}

fn inner(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.dot(b)
}

/// Largest `α` with `x + α dx ⪰ 0`, given the Cholesky factor of `x`.
fn max_step_psd(l: &RealMatrix, dx: &RealMatrix) -> f64 {
    let Some(w) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&w.transpose()) else {
        return 0.0;
    };
    let lam = linalg::min_symmetric_eigenvalue(&w);
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&xi, &d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

struct Iterate {
    xs: Vec<RealMatrix>,
    ss: Vec<RealMatrix>,
    xl: DVector<f64>,
    sl: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dxs: Vec<RealMatrix>,
    dss: Vec<RealMatrix>,
    dxl: DVector<f64>,
    dsl: DVector<f64>,
    dy: DVector<f64>,
}

fn solve(prob: &DualProblem, opts: &LmiOptions) -> Result<Outcome> {
    let p = prob.b.len();
    let dims: Vec<usize> = prob.blocks.iter().map(|k| k.c.nrows()).collect();
    let nlp = prob.lp.as_ref().map_or(0, |lp| lp.c.len());
    let nu = dims.iter().sum::<usize>() as f64 + nlp as f64;
    let norm_b = prob.b.norm();
    let norm_c = (prob.blocks.iter().map(|k| k.c.norm_squared()).sum::<f64>()
        + prob.lp.as_ref().map_or(0.0, |lp| lp.c.norm_squared()))
    .sqrt();

    if p == 0 {
        return Ok(Outcome {
            y: DVector::zeros(0),
            dobj: 0.0,
            gap: 0.0,
            iterations: 0,
            converged: true,
            unbounded: false,
        });
    }

    // Starting point in the spirit of SDPT3.
    let mut it = Iterate {
        xs: Vec::new(),
        ss: Vec::new(),
        xl: DVector::zeros(nlp),
        sl: DVector::zeros(nlp),
        y: DVector::zeros(p),
    };
    for (k, cone) in prob.blocks.iter().enumerate() {
        let d = dims[k] as f64;
        let mut xi: f64 = 10.0_f64.max(d.sqrt());
        let mut eta: f64 = 10.0_f64.max(d.sqrt()).max(cone.c.norm());
        for i in 0..p {
            let an = cone.a.column(i).norm();
            xi = xi.max(d * (1.0 + prob.b[i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        it.xs.push(RealMatrix::identity(dims[k], dims[k]) * xi);
        it.ss.push(RealMatrix::identity(dims[k], dims[k]) * eta);
    }
    if let Some(lp) = &prob.lp {
        let mut xi: f64 = 1.0;
        let mut eta: f64 = 1.0_f64.max(lp.c.amax());
        for i in 0..p {
            let an = lp.g.column(i).norm();
            xi = xi.max((1.0 + prob.b[i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        it.xl = DVector::from_element(nlp, xi);
        it.sl = DVector::from_element(nlp, eta);
    }

    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..opts.max_iterations {
        opts.check_deadline()?;

        // Residuals.
        let mut rp = prob.b.clone();
        let mut rd: Vec<RealMatrix> = Vec::with_capacity(dims.len());
        let mut pobj = 0.0;
        let mut comp = 0.0;
        let mut dinf2 = 0.0;
        for (k, cone) in prob.blocks.iter().enumerate() {
            rp -= cone.a.tr_mul(&DVector::from_column_slice(it.xs[k].as_slice()));
            let ay = mat(&(&cone.a * &it.y), dims[k]);
            let r = &cone.c - &it.ss[k] - ay;
            dinf2 += r.norm_squared();
            rd.push(r);
            pobj += inner(&cone.c, &it.xs[k]);
            comp += inner(&it.xs[k], &it.ss[k]);
        }
        let mut rdl = DVector::zeros(nlp);
        if let Some(lp) = &prob.lp {
            rp -= lp.g.tr_mul(&it.xl);
            rdl = &lp.c - &it.sl - &lp.g * &it.y;
            dinf2 += rdl.norm_squared();
            pobj += lp.c.dot(&it.xl);
            comp += it.xl.dot(&it.sl);
        }
        let dobj = prob.b.dot(&it.y);
        let mu = comp / nu;
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let cgap = comp / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = dinf2.sqrt() / (1.0 + norm_c);
        last = (relgap.max(cgap), pinf, dinf);

        if relgap.max(cgap) < opts.tolerance && pinf < opts.tolerance && dinf < opts.tolerance {
            return Ok(Outcome {
                y: it.y,
                dobj,
                gap: pobj - dobj,
                iterations: iter,
                converged: true,
                unbounded: false,
            });
        }
        if it.y.norm() > UNBOUNDED_NORM {
            return Ok(Outcome {
                y: it.y,
                dobj,
                gap: pobj - dobj,
                iterations: iter,
                converged: false,
                unbounded: true,
            });
        }

        // Factorizations.
        let mut lxs = Vec::with_capacity(dims.len());
        let mut lss = Vec::with_capacity(dims.len());
        let mut sinvs = Vec::with_capacity(dims.len());
        let mut m = RealMatrix::zeros(p, p);
        let mut ok = true;
        for (k, cone) in prob.blocks.iter().enumerate() {
            let d = dims[k];
            let (Some(cx), Some(cs)) = (
                it.xs[k].clone().cholesky(),
                it.ss[k].clone().cholesky(),
            ) else {
                ok = false;
                break;
            };
            let lx = cx.l();
            let lc = cs.l();
            let Some(lc_inv) = lc.solve_lower_triangular(&RealMatrix::identity(d, d)) else {
                ok = false;
                break;
            };
            // S⁻¹ = Ls Lsᵀ with Ls = Lc⁻ᵀ.
            let ls = lc_inv.transpose();
            let sinv = &ls * ls.transpose();
            let lxt = lx.transpose();
            let mut bm = RealMatrix::zeros(d * d, p);
            for i in 0..p {
                if i % 64 == 0 {
                    opts.check_deadline()?;
                }
                let ai = RealMatrix::from_column_slice(d, d, cone.a.column(i).as_slice());
                let t = &lxt * ai * &ls;
                bm.column_mut(i).copy_from_slice(t.as_slice());
            }
            m += bm.tr_mul(&bm);
            lxs.push(lx);
            lss.push(lc);
            sinvs.push(sinv);
        }
        if !ok {
            break;
        }
        if let Some(lp) = &prob.lp {
            let w = it.xl.component_div(&it.sl);
            let mut gw = lp.g.clone();
            for (r, wr) in w.iter().enumerate() {
                gw.row_mut(r).scale_mut(*wr);
            }
            m += lp.g.tr_mul(&gw);
        }
        let m = sym(m);
        let chol = match m.clone().cholesky() {
            Some(c) => Some(c),
            None => {
                let reg = 1e-14 * m.diagonal().amax().max(1e-300);
                (m.clone() + RealMatrix::identity(p, p) * reg).cholesky()
            }
        };
        let lu = chol.is_none().then(|| m.clone().lu());
        let solve_any = |h: &DVector<f64>| -> Option<DVector<f64>> {
            match (&chol, &lu) {
                (Some(c), _) => Some(c.solve(h)),
                (None, Some(f)) => f.solve(h),
                (None, None) => None,
            }
        };

        // Builds a search direction for complementarity targets
        // `Rc_k S_k⁻¹` (given as `rcs`) and LP targets `rcl`.
        let direction = |rcs: &[RealMatrix], rcl: &DVector<f64>| -> Option<Direction> {
            let mut h = rp.clone();
            let mut ts = Vec::with_capacity(dims.len());
            for (k, cone) in prob.blocks.iter().enumerate() {
                let t = &rcs[k] - &it.xs[k] * &rd[k] * &sinvs[k];
                let t = sym(t);
                h -= cone.a.tr_mul(&DVector::from_column_slice(t.as_slice()));
                ts.push(t);
            }
            let mut tl = DVector::zeros(nlp);
            if let Some(lp) = &prob.lp {
                tl = (rcl - it.xl.component_mul(&rdl)).component_div(&it.sl);
                h -= lp.g.tr_mul(&tl);
            }
            let dy = solve_any(&h)?;
            if !dy.iter().all(|v| v.is_finite()) {
                return None;
            }
            let mut dxs = Vec::with_capacity(dims.len());
            let mut dss = Vec::with_capacity(dims.len());
            for (k, cone) in prob.blocks.iter().enumerate() {
                let ady = mat(&(&cone.a * &dy), dims[k]);
                let ds = &rd[k] - &ady;
                let dx = sym(&ts[k] + &it.xs[k] * &ady * &sinvs[k]);
                dxs.push(dx);
                dss.push(ds);
            }
            let (mut dxl, mut dsl) = (DVector::zeros(nlp), DVector::zeros(nlp));
            if let Some(lp) = &prob.lp {
                dsl = &rdl - &lp.g * &dy;
                dxl = &tl + it.xl.component_mul(&(&lp.g * &dy)).component_div(&it.sl);
            }
            Some(Direction {
                dxs,
                dss,
                dxl,
                dsl,
                dy,
            })
        };
        let steps = |dir: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..dims.len() {
                ap = ap.min(max_step_psd(&lxs[k], &dir.dxs[k]));
                ad = ad.min(max_step_psd(&lss[k], &dir.dss[k]));
            }
            if nlp > 0 {
                ap = ap.min(max_step_lp(&it.xl, &dir.dxl));
                ad = ad.min(max_step_lp(&it.sl, &dir.dsl));
            }
            (ap, ad)
        };

        // Predictor.
        let rcs: Vec<RealMatrix> = it.xs.iter().map(|x| -x).collect();
        let rcl = -it.xl.component_mul(&it.sl);
        let Some(pred) = direction(&rcs, &rcl) else {
            break;
        };
        let (ap, ad) = steps(&pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut comp_aff = 0.0;
        for k in 0..dims.len() {
            comp_aff += inner(
                &(&it.xs[k] + &pred.dxs[k] * ap),
                &(&it.ss[k] + &pred.dss[k] * ad),
            );
        }
        if nlp > 0 {
            comp_aff += (&it.xl + &pred.dxl * ap).dot(&(&it.sl + &pred.dsl * ad));
        }
        let mu_aff = (comp_aff / nu).max(0.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

        // Corrector.
        let rcs: Vec<RealMatrix> = (0..dims.len())
            .map(|k| {
                &sinvs[k] * (sigma * mu) - &it.xs[k] - &pred.dxs[k] * &pred.dss[k] * &sinvs[k]
            })
            .collect();
        let rcl = DVector::from_element(nlp, sigma * mu)
            - it.xl.component_mul(&it.sl)
            - pred.dxl.component_mul(&pred.dsl);
        // The LP target is expressed before division by s; the SDP one after.
        let Some(dir) = direction(&rcs, &rcl) else {
            break;
        };
        let (ap, ad) = steps(&dir);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        for k in 0..dims.len() {
            it.xs[k] = sym(&it.xs[k] + &dir.dxs[k] * ap);
            it.ss[k] = sym(&it.ss[k] + &dir.dss[k] * ad);
        }
        if nlp > 0 {
            it.xl += &dir.dxl * ap;
            it.sl += &dir.dsl * ad;
        }
        it.y += &dir.dy * ad;
    }

    // Out of iterations or stalled: accept a moderately accurate point.
    let dobj = prob.b.dot(&it.y);
    let (gap, pinf, dinf) = last;
    let loose = 1e-6;
    Ok(Outcome {
        converged: gap < loose && pinf < loose && dinf < loose,
        unbounded: it.y.norm() > UNBOUNDED_NORM,
        y: it.y,
        dobj,
        gap,
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sym_basis(n: usize) -> Vec<RealMatrix> {
        hermitian_basis(n, Field::Real)
            .iter()
            .map(linalg::real_part)
            .collect()
    }

    #[test]
    fn positive_definite_matrix_is_feasible() {
        let map = AffineMatrixMap::new(RealMatrix::zeros(2, 2), sym_basis(2)).unwrap();
        let sol = find_strictly_feasible(&[map], None, &LmiOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::StrictlyFeasible);
        assert!(sol.margin >= STRICT_MARGIN);
    }

    #[test]
    fn negative_identity_is_infeasible() {
        let map = AffineMatrixMap::new(-RealMatrix::identity(2, 2), vec![RealMatrix::zeros(2, 2)])
            .unwrap();
        let sol = find_strictly_feasible(&[map], None, &LmiOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!((sol.margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let map = AffineMatrixMap::new(RealMatrix::zeros(1, 1), vec![dmatrix![1.0]]).unwrap();
        let eq = LinearEqualities::new(dmatrix![1.0; 1.0], DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let sol = find_strictly_feasible(&[map], Some(&eq), &LmiOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn equality_pins_variable() {
        // x1 + x2 = 1, diag(x1, x2) ≻ 0: best point is x = (1/2, 1/2).
        let map = AffineMatrixMap::new(
            RealMatrix::zeros(2, 2),
            vec![dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 0.0; 0.0, 1.0]],
        )
        .unwrap();
        let eq = LinearEqualities::new(dmatrix![1.0, 1.0], DVector::from_vec(vec![1.0])).unwrap();
        let sol = find_strictly_feasible(&[map], Some(&eq), &LmiOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::StrictlyFeasible);
        assert!((sol.variables[0] - 0.5).abs() < 1e-6);
        assert!((sol.margin - 0.5).abs() < 1e-6);
    }

    #[test]
    fn realify_examples() {
        let c = |re, im| Complex64::new(re, im);
        let h = ComplexMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let ev = linalg::symmetric_eigenvalues(&realify(&h).unwrap());
        for (a, b) in ev.iter().zip([1.0, 1.0, 3.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let id = realify(&ComplexMatrix::identity(3, 3)).unwrap();
        assert_eq!(id, RealMatrix::identity(6, 6));
        let m = dmatrix![1.0, 2.0; 2.0, 5.0];
        let r = realify(&linalg::to_complex(&m)).unwrap();
        assert_eq!(r.view((0, 0), (2, 2)), m.view((0, 0), (2, 2)));
        assert_eq!(r.view((2, 2), (2, 2)), m.view((0, 0), (2, 2)));
        assert_eq!(r.view((0, 2), (2, 2)).amax(), 0.0);
        let bad = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(realify(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn trace_bounded_by_identity() {
        let sol = maximize_trace(
            2,
            Field::Real,
            |p| p - ComplexMatrix::identity(2, 2),
            &LmiOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.solution.status, SdpStatus::Optimal);
        assert!(linalg::max_abs(&(sol.p - ComplexMatrix::identity(2, 2))) < 1e-6);
    }

    #[test]
    fn trace_of_nonpositive_is_zero() {
        let sol = maximize_trace(2, Field::Complex, |p| p.clone(), &LmiOptions::default()).unwrap();
        assert!(linalg::max_abs(&sol.p) < 1e-6);
    }

    #[test]
    fn unbounded_trace_is_reported() {
        let res = maximize_trace(1, Field::Real, |p| -p, &LmiOptions::default());
        assert!(matches!(res, Err(Error::NumericalFailure(_))), "{res:?}");
    }

    #[test]
    fn scalar_riccati_from_data() {
        // Data Y = [1 0], V = [0 1], Z = [a b] from x⁺ = a x + b u.
        let (a, b, q, r) = (1.2_f64, 1.0_f64, 1.0_f64, 1.0_f64);
        let mut p = q;
        for _ in 0..10_000 {
            p = a * a * p - (a * p * b).powi(2) / (r + b * b * p) + q;
        }
        let c = |x: f64| Complex64::new(x, 0.0);
        let y = ComplexMatrix::from_row_slice(1, 2, &[c(1.0), c(0.0)]);
        let v = ComplexMatrix::from_row_slice(1, 2, &[c(0.0), c(1.0)]);
        let z = ComplexMatrix::from_row_slice(1, 2, &[c(a), c(b)]);
        let sol = maximize_trace(
            1,
            Field::Real,
            |pm| {
                y.adjoint() * pm * &y - z.adjoint() * pm * &z - y.adjoint() * &y * c(q)
                    - v.adjoint() * &v * c(r)
            },
            &LmiOptions::default(),
        )
        .unwrap();
        assert!((sol.p[(0, 0)].re - p).abs() < 1e-6 * p, "{} vs {}", sol.p[(0, 0)].re, p);
    }

    #[test]
    fn budget_is_enforced() {
        let opts = LmiOptions {
            memory_budget: Some(1000),
            ..LmiOptions::default()
        };
        let map = AffineMatrixMap::new(RealMatrix::zeros(4, 4), sym_basis(4)).unwrap();
        assert!(matches!(
            find_strictly_feasible(&[map], None, &opts),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn null_space_is_orthonormal_complement() {
        let e = dmatrix![1.0, 1.0, 0.0; 2.0, 2.0, 0.0];
        let n = null_space(&e);
        assert_eq!(n.ncols(), 2);
        assert!((&e * &n).amax() < 1e-14);
        assert!((n.transpose() * &n - RealMatrix::identity(2, 2)).amax() < 1e-14);
    }
}
