//! Data informativity for system identification, stabilization by state
//! feedback and T-product quadratic regulation, decided block by block in the
//! Fourier domain.
//!
//! Gains follow the convention `u = −K⋆x`, so the closed loop is `A − B⋆K`.

pub mod unfolded;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::lmi::{self, AffineMatrixMap, Field, LinearEqualities, LmiOptions, SdpStatus};
use crate::spectral::{self, is_self_conjugate, mirror_index, to_fourier, unique_block_count, FourierBlocks};
use crate::tensor::{RealMatrix, Tensor3};
use crate::tqr;

/// Largest imaginary residue tolerated when a gain is brought back from the
/// Fourier domain.
pub const GAIN_RESIDUE_TOL: f64 = 1e-9;
/// Relative data residual below which identified systems count as exact.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// Inputs `v` (m×lh×r), states `y` (n×lh×r) and shifted states `z` (n×lh×r).
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    v: Tensor3,
    y: Tensor3,
    z: Tensor3,
    h: usize,
}

impl ExperimentData {
    /// `h` is the number of columns per sample; `l = columns / h`.
    pub fn new(v: Tensor3, y: Tensor3, z: Tensor3, h: usize) -> Result<Self> {
        let cols = y.m();
        if h == 0 || cols % h != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{cols} data columns are not a multiple of h = {h}"
            )));
        }
        if v.m() != cols || z.m() != cols {
            return Err(Error::DimensionMismatch(format!(
                "column counts differ: v {}, y {}, z {}",
                v.m(),
                cols,
                z.m()
            )));
        }
        if z.n() != y.n() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} rows, z has {}",
                y.n(),
                z.n()
            )));
        }
        if v.r() != y.r() || z.r() != y.r() {
            return Err(Error::DimensionMismatch("data depths differ".into()));
        }
        Ok(ExperimentData { v, y, z, h })
    }

    pub fn v(&self) -> &Tensor3 {
        &self.v
    }
    pub fn y(&self) -> &Tensor3 {
        &self.y
    }
    pub fn z(&self) -> &Tensor3 {
        &self.z
    }
    pub fn n(&self) -> usize {
        self.y.n()
    }
    pub fn m(&self) -> usize {
        self.v.n()
    }
    pub fn r(&self) -> usize {
        self.y.r()
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn l(&self) -> usize {
        self.columns() / self.h
    }
    pub fn columns(&self) -> usize {
        self.y.m()
    }

    /// Relative residual of `z ≈ a⋆y + b⋆v`.
    pub fn residual(&self, a: &Tensor3, b: &Tensor3) -> Result<f64> {
        let pred = &a.tprod(&self.y)? + &b.tprod(&self.v)?;
        Ok((&pred - &self.z).frobenius_norm() / self.z.frobenius_norm().max(f64::MIN_POSITIVE))
    }
}

#[derive(Serialize, Deserialize)]
struct DataJson {
    v: Tensor3,
    y: Tensor3,
    z: Tensor3,
    #[serde(default = "one")]
    h: usize,
}

fn one() -> usize {
    1
}

impl Serialize for ExperimentData {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DataJson {
            v: self.v.clone(),
            y: self.y.clone(),
            z: self.z.clone(),
            h: self.h,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExperimentData {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DataJson::deserialize(d)?;
        ExperimentData::new(raw.v, raw.y, raw.z, raw.h)
            .map_err(serde::de::Error::custom)
    }
}

/// Fourier blocks of the three data tensors.
pub(crate) struct DataBlocks {
    pub y: FourierBlocks,
    pub z: FourierBlocks,
    pub v: FourierBlocks,
    /// Largest singular value of any stacked `[Y_j; V_j]`, the shared rank scale.
    pub sigma_ref: f64,
}

impl DataBlocks {
    pub fn new(d: &ExperimentData) -> Self {
        let y = to_fourier(&d.y);
        let z = to_fourier(&d.z);
        let v = to_fourier(&d.v);
        let sigma_ref = (0..unique_block_count(d.r()))
            .map(|j| {
                linalg::singular_values(&vstack(&[y.block(j), v.block(j)]))
                    .first()
                    .copied()
                    .unwrap_or(0.0)
            })
            .fold(0.0, f64::max);
        DataBlocks { y, z, v, sigma_ref }
    }
}

pub(crate) fn vstack(parts: &[&ComplexMatrix]) -> ComplexMatrix {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.nrows()).copy_from(*p);
        at += p.nrows();
    }
    out
}

fn field_for(j: usize, r: usize) -> Field {
    if is_self_conjugate(j, r) {
        Field::Real
    } else {
        Field::Complex
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sysid,
    Stabilization,
    Tqr,
}

fn serialize_complex<S: Serializer>(m: &Option<ComplexMatrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(complex_rows).serialize(s)
}

/// Rows of `[re, im]` pairs.
pub fn complex_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TqrCondition {
    /// Identifiable data with a stabilizable and detectable identified block.
    Identified,
    /// The equality-constrained LMI certificate.
    Certificate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockReport {
    /// 1-based Fourier block index.
    pub j: usize,
    /// Set when the block was filled in by conjugating block `mirror_of`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mirror_of: Option<usize>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp_status: Option<SdpStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilizable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<TqrCondition>,
    #[serde(
        serialize_with = "serialize_complex",
        skip_serializing_if = "Option::is_none"
    )]
    pub certificate: Option<ComplexMatrix>,
}

impl BlockReport {
    fn new(j: usize) -> Self {
        BlockReport {
            j: j + 1,
            mirror_of: None,
            ok: false,
            rank: None,
            required_rank: None,
            sdp_status: None,
            margin: None,
            stabilizable: None,
            detectable: None,
            condition: None,
            certificate: None,
        }
    }

    fn mirrored(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.mirror_of = Some(self.j);
        out.j = j + 1;
        out.certificate = self.certificate.as_ref().map(|c| c.map(|z| z.conj()));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InformativityReport {
    pub task: Task,
    pub verdict: bool,
    pub blocks: Vec<BlockReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<Tensor3>,
}

impl InformativityReport {
    fn from_unique(task: Task, unique: Vec<BlockReport>, r: usize) -> Self {
        let verdict = unique.iter().all(|b| b.ok);
        let blocks = (0..r)
            .map(|j| {
                if j < unique.len() {
                    unique[j].clone()
                } else {
                    unique[mirror_index(j, r)].mirrored(j)
                }
            })
            .collect();
        InformativityReport {
            task,
            verdict,
            blocks,
            gain: None,
        }
    }
}

// ---------------------------------------------------------------------------
// System identification

/// Identifiability: every `[Y_j; V_j]` has full row rank `n + m`.
pub fn check_sysid(d: &ExperimentData) -> InformativityReport {
    let blocks = DataBlocks::new(d);
    let required = d.n() + d.m();
    let unique = (0..unique_block_count(d.r()))
        .map(|j| {
            let stacked = vstack(&[blocks.y.block(j), blocks.v.block(j)]);
            let rank = linalg::rank_with_scale(&stacked, Some(blocks.sigma_ref));
            let mut b = BlockReport::new(j);
            b.rank = Some(rank);
            b.required_rank = Some(required);
            b.ok = blocks.sigma_ref > 0.0 && rank == required;
            b
        })
        .collect();
    InformativityReport::from_unique(Task::Sysid, unique, d.r())
}

/// Minimum-norm least-squares `(A, B)` for arbitrary data, with the relative
/// residual `‖Z − A⋆Y − B⋆V‖ / ‖Z‖`.
pub fn identify_least_squares(d: &ExperimentData) -> Result<(Tensor3, Tensor3, f64)> {
    let blocks = DataBlocks::new(d);
    let (n, m, r) = (d.n(), d.m(), d.r());
    let mut a_blocks = Vec::new();
    let mut b_blocks = Vec::new();
    for j in 0..unique_block_count(r) {
        let stacked = vstack(&[blocks.y.block(j), blocks.v.block(j)]);
        let ab = blocks.z.block(j) * linalg::pinv(&stacked);
        a_blocks.push(ab.columns(0, n).into_owned());
        b_blocks.push(ab.columns(n, m).into_owned());
    }
    let a = spectral::from_fourier(&FourierBlocks::from_unique(a_blocks, r)?)?;
    let b = spectral::from_fourier(&FourierBlocks::from_unique(b_blocks, r)?)?;
    let residual = d.residual(&a, &b)?;
    Ok((a, b, residual))
}

/// The unique `(A, B)` explaining identifiable data.
pub fn identify(d: &ExperimentData) -> Result<(Tensor3, Tensor3)> {
    let report = check_sysid(d);
    if !report.verdict {
        let bad = report.blocks.iter().find(|b| !b.ok).map_or(0, |b| b.j);
        return Err(Error::NotInformative(format!(
            "[Y_j; V_j] is rank deficient at block {bad}"
        )));
    }
    let (a, b, residual) = identify_least_squares(d)?;
    if residual > CONSISTENCY_TOL {
        return Err(Error::InconsistentData { residual });
    }
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// Stabilization

/// Outcome of the per-block stabilization LMI.
pub(crate) struct Certificate {
    pub status: SdpStatus,
    pub margin: f64,
    pub s: ComplexMatrix,
}

/// Searches for `S` with `YS` Hermitian, `W S = 0` for each `W` in
/// `annihilators`, `Re tr(YS) = n` and `[[YS, ZS], [(ZS)ᴴ, YS]] ≻ 0`.
///
/// Every constraint sees `S` only through `M S` with `M = [Y; Z; W…]`, so the
/// search runs over `M S = U T` for an orthonormal range basis `U` of `M` and
/// returns `S = M⁺ U T`. This keeps the problem independent of how badly
/// the data are conditioned.
pub(crate) fn stabilization_lmi(
    y: &ComplexMatrix,
    z: &ComplexMatrix,
    annihilators: &[ComplexMatrix],
    field: Field,
    opts: &LmiOptions,
) -> Result<Certificate> {
    let n = y.nrows();
    let mut parts = vec![y, z];
    parts.extend(annihilators.iter());
    let m = vstack(&parts);
    let u = match field {
        Field::Complex => linalg::range_basis(&m, None),
        Field::Real => real_range_basis(&linalg::real_part(&m)),
    };
    if u.ncols() == 0 {
        return Ok(Certificate {
            status: SdpStatus::Infeasible,
            margin: if n == 0 { f64::INFINITY } else { 0.0 },
            s: ComplexMatrix::zeros(y.ncols(), n),
        });
    }
    let mut offset = 2 * n;
    let reduced: Vec<ComplexMatrix> = annihilators
        .iter()
        .map(|w| {
            let part = u.rows(offset, w.nrows()).into_owned();
            offset += w.nrows();
            part
        })
        .collect();
    let yt = u.rows(0, n).into_owned();
    let zt = u.rows(n, n).into_owned();
    let cert = stabilization_lmi_reduced(&yt, &zt, &reduced, field, opts)?;
    let back = match field {
        Field::Complex => linalg::pinv(&m),
        Field::Real => linalg::to_complex(&linalg::pinv_real(&linalg::real_part(&m))),
    };
    Ok(Certificate {
        s: back * u * cert.s,
        ..cert
    })
}

fn real_range_basis(m: &RealMatrix) -> ComplexMatrix {
    let (rows, cols) = m.shape();
    let dec = linalg::svd(m);
    let tol = rows.max(cols) as f64 * dec.s.first().copied().unwrap_or(0.0) * linalg::RANK_TOL;
    let keep = dec.s.iter().filter(|&&x| x > tol).count();
    linalg::to_complex(&dec.u.columns(0, keep).into_owned())
}

/// The LMI search itself, over `S` directly; data are scaled to unit
/// Frobenius norm first.
fn stabilization_lmi_reduced(
    y: &ComplexMatrix,
    z: &ComplexMatrix,
    annihilators: &[ComplexMatrix],
    field: Field,
    opts: &LmiOptions,
) -> Result<Certificate> {
    let (n, cols) = y.shape();
    let scale = linalg::frobenius(&vstack(&[y, z]));
    let complex = field == Field::Complex;
    let nvars = cols * n * if complex { 2 } else { 1 };
    let dim = 2 * n * if complex { 2 } else { 1 };
    if scale == 0.0 || n == 0 {
        return Ok(Certificate {
            status: SdpStatus::Infeasible,
            margin: if n == 0 { f64::INFINITY } else { 0.0 },
            s: ComplexMatrix::zeros(cols, n),
        });
    }
    opts.check_budget(nvars, &[dim])?;
    let y = y.map(|x| x / scale);
    let z = z.map(|x| x / scale);
    let annihilators: Vec<ComplexMatrix> = annihilators
        .iter()
        .filter_map(|w| {
            let s = linalg::frobenius(w);
            (s > 0.0).then(|| w.map(|x| x / s))
        })
        .collect();

    // Basis element i is the unit (a, b) entry of S, real or imaginary.
    let unit = |i: usize| -> (usize, usize, Complex64) {
        let (k, im) = if complex { (i / 2, i % 2 == 1) } else { (i, false) };
        let (a, b) = (k % cols, k / cols);
        (a, b, if im { Complex64::i() } else { Complex64::new(1.0, 0.0) })
    };

    let mut coeffs = RealMatrix::zeros(dim * dim, nvars);
    let n_skew = if complex { n * n } else { n * (n - 1) / 2 };
    let n_ann: usize = annihilators.iter().map(|w| w.nrows() * n * if complex { 2 } else { 1 }).sum();
    let n_eq = n_skew + 1 + n_ann;
    let mut eq = RealMatrix::zeros(n_eq, nvars);
    for i in 0..nvars {
        if i % 256 == 0 {
            opts.check_deadline()?;
        }
        let (a, b, w) = unit(i);
        // Y E = w · Y[:, a] e_bᵀ, likewise for Z.
        let mut ye = ComplexMatrix::zeros(n, n);
        let mut ze = ComplexMatrix::zeros(n, n);
        for row in 0..n {
            ye[(row, b)] = y[(row, a)] * w;
            ze[(row, b)] = z[(row, a)] * w;
        }
        let he = linalg::hermitian_part(&ye);
        let mut block = ComplexMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&he);
        block.view_mut((n, n), (n, n)).copy_from(&he);
        block.view_mut((0, n), (n, n)).copy_from(&ze);
        block.view_mut((n, 0), (n, n)).copy_from(&ze.adjoint());
        let real = if complex {
            lmi::realify_unchecked(&block)
        } else {
            linalg::real_part(&block)
        };
        coeffs.column_mut(i).copy_from_slice(real.as_slice());

        let skew = &ye - ye.adjoint();
        let mut row = 0;
        for p in 0..n {
            for q in p..n {
                if q > p {
                    eq[(row, i)] = skew[(p, q)].re;
                    row += 1;
                }
                if complex {
                    eq[(row, i)] = skew[(p, q)].im;
                    row += 1;
                }
            }
        }
        eq[(row, i)] = ye.trace().re;
        row += 1;
        for wmat in &annihilators {
            for p in 0..wmat.nrows() {
                let val = wmat[(p, a)] * w;
                for q in 0..n {
                    let entry = if q == b { val } else { Complex64::new(0.0, 0.0) };
                    eq[(row, i)] = entry.re;
                    row += 1;
                    if complex {
                        eq[(row, i)] = entry.im;
                        row += 1;
                    }
                }
            }
        }
        debug_assert_eq!(row, n_eq);
    }
    let mut rhs = DVector::zeros(n_eq);
    rhs[n_skew] = n as f64;
    let map = AffineMatrixMap::from_stacked(RealMatrix::zeros(dim, dim), coeffs);
    let eq = LinearEqualities::new(eq, rhs)?;
    let sol = lmi::find_strictly_feasible(&[map], Some(&eq), opts)?;
    let mut s = ComplexMatrix::zeros(cols, n);
    for i in 0..nvars {
        let (a, b, w) = unit(i);
        s[(a, b)] += w * sol.variables[i];
    }
    Ok(Certificate {
        status: sol.status,
        margin: sol.margin,
        s,
    })
}

fn certificate_block(j: usize, cert: Certificate) -> Result<BlockReport> {
    if cert.status == SdpStatus::NumericalFailure {
        return Err(Error::NumericalFailure(format!(
            "stabilization LMI did not converge (margin {:e})",
            cert.margin
        ))
        .in_block(j + 1));
    }
    let mut b = BlockReport::new(j);
    b.ok = cert.status == SdpStatus::StrictlyFeasible;
    b.sdp_status = Some(cert.status);
    b.margin = Some(cert.margin);
    b.certificate = Some(cert.s);
    Ok(b)
}

pub fn check_stabilization(d: &ExperimentData) -> Result<InformativityReport> {
    check_stabilization_with(d, &LmiOptions::default())
}

/// Per unique block, a strictly feasible certificate `S_j` with `Y_j S_j`
/// Hermitian and `[[Y_j S_j, Z_j S_j], [(Z_j S_j)ᴴ, Y_j S_j]] ≻ 0`.
pub fn check_stabilization_with(d: &ExperimentData, opts: &LmiOptions) -> Result<InformativityReport> {
    let blocks = DataBlocks::new(d);
    let r = d.r();
    let mut unique = Vec::new();
    for j in 0..unique_block_count(r) {
        let cert = stabilization_lmi(blocks.y.block(j), blocks.z.block(j), &[], field_for(j, r), opts)
            .map_err(|e| e.in_block(j + 1))?;
        unique.push(certificate_block(j, cert)?);
    }
    Ok(InformativityReport::from_unique(Task::Stabilization, unique, r))
}

/// Assembles a real gain tensor from its unique Fourier blocks.
pub(crate) fn assemble_gain(unique: Vec<ComplexMatrix>, r: usize) -> Result<Tensor3> {
    let fb = FourierBlocks::from_unique(unique, r)?;
    let (k, residue) = spectral::from_fourier_with_residue(&fb)?;
    if residue > GAIN_RESIDUE_TOL * k.max_abs().max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "gain has imaginary residue {residue:e}"
        )));
    }
    Ok(k)
}

/// `K_j = −V_j S_j (Y_j S_j)⁻¹` from the certificates of a positive report,
/// assembled into a real `m×n×r` gain.
pub fn synth_stabilizing_gain(d: &ExperimentData, report: &InformativityReport) -> Result<Tensor3> {
    if report.task != Task::Stabilization || !report.verdict {
        return Err(Error::Precondition("a positive stabilization report is required".into()));
    }
    let blocks = DataBlocks::new(d);
    let r = d.r();
    let scale_of = |j: usize| linalg::frobenius(&vstack(&[blocks.y.block(j), blocks.z.block(j)]));
    let mut unique = Vec::new();
    for j in 0..unique_block_count(r) {
        let s = report
            .blocks
            .get(j)
            .and_then(|b| b.certificate.as_ref())
            .ok_or_else(|| Error::Precondition(format!("missing certificate for block {}", j + 1)))?;
        let scale = scale_of(j);
        let ys = blocks.y.block(j).map(|x| x / scale) * s;
        let vs = blocks.v.block(j).map(|x| x / scale) * s;
        let inv = linalg::solve(&ys, &ComplexMatrix::identity(d.n(), d.n()))
            .ok_or_else(|| Error::Singular { block: j + 1, ratio: 0.0 })?;
        unique.push(-(vs * inv));
    }
    assemble_gain(unique, r)
}

// ---------------------------------------------------------------------------
// Quadratic regulation

/// Maximal solution `P` of the data-driven trace program and the gain
/// `−V Y†` built from a right inverse `Y†` with `L(P) Y† = 0`.
pub(crate) struct LqSolution {
    #[allow(dead_code)]
    pub p: ComplexMatrix,
    pub k: ComplexMatrix,
}

/// Data-driven LQ gain for one block.
///
/// `L(P)` depends on the data only through `D = [Y; Z; V] = U C` with `U` an
/// orthonormal range basis and `C` of full row rank, so `L(P) = Cᴴ L̂(P) C`
/// where `L̂` is built from the rows of `U`. The trace program and the null
/// space are computed for `L̂`, which does not see the conditioning of `D`.
pub(crate) fn lq_gain(
    y: &ComplexMatrix,
    z: &ComplexMatrix,
    v: &ComplexMatrix,
    q: &ComplexMatrix,
    rw: &ComplexMatrix,
    field: Field,
    opts: &LmiOptions,
) -> Result<LqSolution> {
    let (n, m) = (y.nrows(), v.nrows());
    let stacked = vstack(&[y, z, v]);
    let u = match field {
        Field::Complex => linalg::range_basis(&stacked, None),
        Field::Real => real_range_basis(&linalg::real_part(&stacked)),
    };
    if u.ncols() == 0 {
        return Err(Error::NotInformative("data are identically zero".into()));
    }
    let (yu, zu, vu) = (
        u.rows(0, n).into_owned(),
        u.rows(n, n).into_owned(),
        u.rows(2 * n, m).into_owned(),
    );
    let fixed = yu.adjoint() * q * &yu + vu.adjoint() * rw * &vu;
    let lhat = |p: &ComplexMatrix| yu.adjoint() * p * &yu - zu.adjoint() * p * &zu - &fixed;
    let trace = lmi::maximize_trace(n, field, |p| lhat(p), opts)?;
    if trace.solution.status != SdpStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "trace program stopped with status {:?}",
            trace.solution.status
        )));
    }
    let p = linalg::hermitian_part(&trace.p);
    let l = linalg::hermitian_part(&lhat(&p));
    let (vals, vecs) = linalg::hermitian_eigen(&l);
    let lmax = vals.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let keep: Vec<_> = (0..vals.len())
        .filter(|&i| vals[i].abs() <= 1e-6 * lmax.max(1e-300))
        .map(|i| vecs.column(i).into_owned())
        .collect();
    let fail = |what: String| Error::NumericalFailure(what);
    if keep.is_empty() {
        return Err(fail("L(P*) has no null space".into()));
    }
    let null = ComplexMatrix::from_columns(&keep);
    let yn = &yu * &null;
    if linalg::rank(&yn) < n {
        return Err(fail(format!(
            "no right inverse of Y in null(L(P*)) (rank {} < {n})",
            linalg::rank(&yn)
        )));
    }
    let ydag = &null * linalg::pinv(&yn);
    let lnorm = linalg::frobenius(&l);
    let resid = linalg::frobenius(&(&l * &ydag));
    let inv_err = linalg::max_abs(&(&yu * &ydag - ComplexMatrix::identity(n, n)));
    if resid > 1e-6 * lnorm * (1.0 + linalg::frobenius(&ydag)) + 1e-9 || inv_err > 1e-8 {
        return Err(fail(format!(
            "right inverse residual {resid:e} (|L| = {lnorm:e}), inverse error {inv_err:e}"
        )));
    }
    let (ydag, p) = polish_lq(&yu, &zu, &vu, q, rw, ydag, p);
    Ok(LqSolution { k: -(vu * ydag), p })
}

/// Policy iteration on the data. A right inverse `G` of `Ŷ` is a feedback
/// realized by data combinations, with closed loop `Ẑ G`; its cost solves a
/// Stein equation and the improved `G` minimizes `Gᴴ H G` subject to `Ŷ G = I`.
/// Stops at the first step that does not help.
fn polish_lq(
    yu: &ComplexMatrix,
    zu: &ComplexMatrix,
    vu: &ComplexMatrix,
    q: &ComplexMatrix,
    rw: &ComplexMatrix,
    g0: ComplexMatrix,
    p0: ComplexMatrix,
) -> (ComplexMatrix, ComplexMatrix) {
    let (n, k) = (yu.nrows(), yu.ncols());
    let stage = yu.adjoint() * q * yu + vu.adjoint() * rw * vu;
    let mut rhs = ComplexMatrix::zeros(k + n, n);
    rhs.view_mut((k, 0), (n, n)).copy_from(&ComplexMatrix::identity(n, n));
    let mut best = (g0.clone(), p0, f64::INFINITY);
    let mut g = g0;
    for _ in 0..30 {
        let f = zu * &g;
        if linalg::spectral_radius(&f) >= 1.0 {
            break;
        }
        let Ok(cost) = tqr::stein(&f, &(g.adjoint() * &stage * &g)) else {
            break;
        };
        let tr = cost.trace().re;
        if !(tr < best.2 * (1.0 + 1e-12)) {
            break;
        }
        let h = &stage + zu.adjoint() * &cost * zu;
        best = (g.clone(), cost, tr);
        let mut kkt = ComplexMatrix::zeros(k + n, k + n);
        kkt.view_mut((0, 0), (k, k)).copy_from(&h);
        kkt.view_mut((0, k), (k, n)).copy_from(&yu.adjoint());
        kkt.view_mut((k, 0), (n, k)).copy_from(yu);
        let Some(sol) = linalg::solve(&kkt, &rhs) else {
            break;
        };
        let next = sol.rows(0, k).into_owned();
        let step = linalg::frobenius(&(&next - &g));
        g = next;
        if step <= 1e-14 * (1.0 + linalg::frobenius(&g)) {
            break;
        }
    }
    (best.0, best.1)
}

pub fn check_tqr(d: &ExperimentData, q: &Tensor3, rr: &Tensor3) -> Result<InformativityReport> {
    check_tqr_with(d, q, rr, &LmiOptions::default())
}

/// Per unique block: identifiable with a stabilizable and detectable
/// identified pair, or an LMI certificate with `V_j S_j = 0` and
/// `Q_j Z_j S_j = 0`.
pub fn check_tqr_with(
    d: &ExperimentData,
    q: &Tensor3,
    rr: &Tensor3,
    opts: &LmiOptions,
) -> Result<InformativityReport> {
    let (n, m, r) = (d.n(), d.m(), d.r());
    tqr::validate_weights(q, rr, n, m, r)?;
    let blocks = DataBlocks::new(d);
    let fq = to_fourier(q);
    let mut unique = Vec::new();
    for j in 0..unique_block_count(r) {
        let (y, z, v) = (blocks.y.block(j), blocks.z.block(j), blocks.v.block(j));
        let stacked = vstack(&[y, v]);
        let rank = linalg::rank_with_scale(&stacked, Some(blocks.sigma_ref));
        let mut b = BlockReport::new(j);
        b.rank = Some(rank);
        b.required_rank = Some(n + m);
        if blocks.sigma_ref > 0.0 && rank == n + m {
            let ab = z * linalg::pinv(&stacked);
            let a = ab.columns(0, n).into_owned();
            let bm = ab.columns(n, m).into_owned();
            let stab = tqr::is_stabilizable_block(&a, &bm);
            let det = tqr::is_detectable_block(fq.block(j), &a);
            b.stabilizable = Some(stab);
            b.detectable = Some(det);
            if stab && det {
                b.ok = true;
                b.condition = Some(TqrCondition::Identified);
                unique.push(b);
                continue;
            }
        }
        let qz = fq.block(j) * z;
        let cert = stabilization_lmi(y, z, &[v.clone(), qz], field_for(j, r), opts)
            .map_err(|e| e.in_block(j + 1))?;
        let cb = certificate_block(j, cert)?;
        b.sdp_status = cb.sdp_status;
        b.margin = cb.margin;
        b.certificate = cb.certificate;
        if cb.ok {
            b.ok = true;
            b.condition = Some(TqrCondition::Certificate);
        }
        unique.push(b);
    }
    Ok(InformativityReport::from_unique(Task::Tqr, unique, r))
}

pub fn synth_tqr_gain(d: &ExperimentData, q: &Tensor3, rr: &Tensor3) -> Result<Tensor3> {
    synth_tqr_gain_with(d, q, rr, &LmiOptions::default())
}

/// Optimal TQR gain from data alone: per unique block, the maximal `P_j`
/// of the trace program, a right inverse `Y_j†` inside `null(L_j(P_j))` and
/// `K_j = −V_j Y_j†`.
pub fn synth_tqr_gain_with(
    d: &ExperimentData,
    q: &Tensor3,
    rr: &Tensor3,
    opts: &LmiOptions,
) -> Result<Tensor3> {
    let (n, m, r) = (d.n(), d.m(), d.r());
    tqr::validate_weights(q, rr, n, m, r)?;
    let blocks = DataBlocks::new(d);
    let (fq, fr) = (to_fourier(q), to_fourier(rr));
    let mut unique = Vec::new();
    for j in 0..unique_block_count(r) {
        let sol = lq_gain(
            blocks.y.block(j),
            blocks.z.block(j),
            blocks.v.block(j),
            fq.block(j),
            fr.block(j),
            field_for(j, r),
            opts,
        )
        .map_err(|e| e.in_block(j + 1))?;
        unique.push(sol.k);
    }
    assemble_gain(unique, r)
}
