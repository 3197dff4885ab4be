//! Dense counterparts of the informativity tests, working on the
//! block-circulant matrices of the whole data set at once.
//!
//! These are the baseline the Fourier-domain tests are checked and timed
//! against; gains come back as dense `mr × nr` matrices.

use serde::Serialize;

use super::{lq_gain, stabilization_lmi, vstack, ExperimentData};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::lmi::{Field, LmiOptions, SdpStatus};
use crate::tensor::{RealMatrix, Tensor3};
use crate::tqr;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnfoldedReport {
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp_status: Option<SdpStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl UnfoldedReport {
    fn empty() -> Self {
        UnfoldedReport {
            verdict: false,
            rank: None,
            required_rank: None,
            sdp_status: None,
            margin: None,
        }
    }
}

struct Dense {
    y: ComplexMatrix,
    z: ComplexMatrix,
    v: ComplexMatrix,
}

impl Dense {
    fn new(d: &ExperimentData) -> Self {
        Dense {
            y: linalg::to_complex(&d.y().bcirc()),
            z: linalg::to_complex(&d.z().bcirc()),
            v: linalg::to_complex(&d.v().bcirc()),
        }
    }
}

/// Rank of `[ψ(Y); ψ(V)]` against `(n + m) r`.
pub fn check_sysid_unfolded(d: &ExperimentData) -> UnfoldedReport {
    let dense = Dense::new(d);
    let required = (d.n() + d.m()) * d.r();
    let rank = linalg::rank(&vstack(&[&dense.y, &dense.v]));
    UnfoldedReport {
        verdict: rank == required,
        rank: Some(rank),
        required_rank: Some(required),
        ..UnfoldedReport::empty()
    }
}

/// Least-squares `[ψ(A) ψ(B)] = ψ(Z) [ψ(Y); ψ(V)]⁺` of identifiable data.
pub fn identify_unfolded(d: &ExperimentData) -> Result<(RealMatrix, RealMatrix)> {
    let dense = Dense::new(d);
    let stacked = vstack(&[&dense.y, &dense.v]);
    let required = (d.n() + d.m()) * d.r();
    if linalg::rank(&stacked) != required {
        return Err(Error::NotInformative("[ψ(Y); ψ(V)] is rank deficient".into()));
    }
    let ab = linalg::real_part(&(&dense.z * linalg::pinv(&stacked)));
    let nr = d.n() * d.r();
    Ok((ab.columns(0, nr).into_owned(), ab.columns(nr, d.m() * d.r()).into_owned()))
}

/// The single stabilization LMI on `(ψ(Y), ψ(Z))`.
pub fn check_stabilization_unfolded(d: &ExperimentData, opts: &LmiOptions) -> Result<UnfoldedReport> {
    let dense = Dense::new(d);
    let cert = stabilization_lmi(&dense.y, &dense.z, &[], Field::Real, opts)?;
    Ok(UnfoldedReport {
        verdict: cert.status == SdpStatus::StrictlyFeasible,
        sdp_status: Some(cert.status),
        margin: Some(cert.margin),
        ..UnfoldedReport::empty()
    })
}

/// Dense stabilizing gain `−ψ(V) S (ψ(Y) S)⁻¹` for the unfolded system.
pub fn synth_stabilizing_gain_unfolded(d: &ExperimentData, opts: &LmiOptions) -> Result<RealMatrix> {
    let dense = Dense::new(d);
    let cert = stabilization_lmi(&dense.y, &dense.z, &[], Field::Real, opts)?;
    if cert.status != SdpStatus::StrictlyFeasible {
        return Err(Error::NotInformative(format!(
            "dense stabilization LMI: {:?} (margin {:e})",
            cert.status, cert.margin
        )));
    }
    let scale = linalg::frobenius(&vstack(&[&dense.y, &dense.z]));
    let ys = dense.y.map(|x| x / scale) * &cert.s;
    let vs = dense.v.map(|x| x / scale) * &cert.s;
    let nr = d.n() * d.r();
    let inv = linalg::solve(&ys, &ComplexMatrix::identity(nr, nr))
        .ok_or(Error::Singular { block: 0, ratio: 0.0 })?;
    Ok(linalg::real_part(&-(vs * inv)))
}

/// Informativity for quadratic regulation of the unfolded system: either
/// identifiable with a stabilizable and detectable identified pair, or the
/// equality-constrained certificate exists.
pub fn check_tqr_unfolded(
    d: &ExperimentData,
    q: &Tensor3,
    rr: &Tensor3,
    opts: &LmiOptions,
) -> Result<UnfoldedReport> {
    let (n, m, r) = (d.n(), d.m(), d.r());
    tqr::validate_weights(q, rr, n, m, r)?;
    let dense = Dense::new(d);
    let qd = linalg::to_complex(&q.bcirc());
    let stacked = vstack(&[&dense.y, &dense.v]);
    let required = (n + m) * r;
    let rank = linalg::rank(&stacked);
    let mut report = UnfoldedReport {
        rank: Some(rank),
        required_rank: Some(required),
        ..UnfoldedReport::empty()
    };
    if rank == required {
        let ab = &dense.z * linalg::pinv(&stacked);
        let a = ab.columns(0, n * r).into_owned();
        let b = ab.columns(n * r, m * r).into_owned();
        if tqr::is_stabilizable_block(&a, &b) && tqr::is_detectable_block(&qd, &a) {
            report.verdict = true;
            return Ok(report);
        }
    }
    let qz = &qd * &dense.z;
    let cert = stabilization_lmi(&dense.y, &dense.z, &[dense.v.clone(), qz], Field::Real, opts)?;
    if cert.status == SdpStatus::NumericalFailure {
        return Err(Error::NumericalFailure(format!(
            "dense regulation LMI did not converge (margin {:e})",
            cert.margin
        )));
    }
    report.verdict = cert.status == SdpStatus::StrictlyFeasible;
    report.sdp_status = Some(cert.status);
    report.margin = Some(cert.margin);
    Ok(report)
}

/// Data-driven LQ gain of the unfolded system, as a dense `mr × nr` matrix.
pub fn synth_tqr_gain_unfolded(
    d: &ExperimentData,
    q: &Tensor3,
    rr: &Tensor3,
    opts: &LmiOptions,
) -> Result<RealMatrix> {
    let (n, m, r) = (d.n(), d.m(), d.r());
    tqr::validate_weights(q, rr, n, m, r)?;
    let dense = Dense::new(d);
    let qd = linalg::to_complex(&q.bcirc());
    let rd = linalg::to_complex(&rr.bcirc());
    let sol = lq_gain(&dense.y, &dense.z, &dense.v, &qd, &rd, Field::Real, opts)?;
    Ok(linalg::real_part(&sol.k))
}
