use super::secular::{resolve_free, solve_ball};
use super::{CompressedInstance, SfoError, SolveOutcome};
use crate::linalg::{cholesky_lower, complement_basis};
use crate::{Mat, Vector};

/// `min ½tr(XᵀRX) − tr(XᵀA)` s.t. `tr(XᵀΓX) ≤ α²`, `Xᵀc = d`.
///
/// With `Γ = LLᵀ` and `Z = LᵀX` the equality fixes the component along
/// `c' = L⁻¹c`; the remainder lives in `c'^⊥` and is a ball-constrained
/// quadratic.
pub(crate) fn solve_qcqp(inst: &CompressedInstance, alpha: f64, d: &Vector) -> Result<SolveOutcome, SfoError> {
    let m = inst.dimension();
    let a = inst.linear.as_ref().ok_or(SfoError::Missing("linear term"))?;
    let c = inst.equality.as_ref().ok_or(SfoError::Missing("equality vector"))?;
    let l = cholesky_lower(&inst.metric).ok_or(SfoError::NonPdMetric)?;
    let lt = l.transpose();
    let whiten = |x: &Mat| l.solve_lower_triangular(x).ok_or(SfoError::NonPdMetric);
    let unwhiten = |z: &Mat| lt.solve_upper_triangular(z).ok_or(SfoError::NonPdMetric);

    let r_w = whiten(&whiten(&inst.r_yy)?.transpose())?;
    let a_w = whiten(a)?;
    let c_w = whiten(&Mat::from_column_slice(m, 1, c.as_slice()))?.column(0).into_owned();
    let c_norm = c_w.norm();
    if c_norm == 0.0 {
        return Err(SfoError::ZeroEquality);
    }
    let u = &c_w / c_norm;
    let p = &u * d.transpose() / c_norm;
    let alpha_sq = alpha * alpha;
    let bound = d.norm_squared() / (c_norm * c_norm);
    let beta_sq = alpha_sq - bound;
    if beta_sq < -1e-12 * alpha_sq.max(1.0) {
        return Err(SfoError::Infeasible { alpha_sq, bound });
    }
    if m == 1 {
        let x = unwhiten(&p)?;
        return Ok(SolveOutcome { x, objective: f64::NAN, residuals: Vec::new(), iterations: 0, history: Vec::new() });
    }
    let basis = complement_basis(&c_w);
    let h = basis.transpose() * &r_w * &basis;
    let g = basis.transpose() * (&a_w - &r_w * &p);
    let sol = solve_ball(&h, &g, beta_sq.max(0.0), false)?;
    let mut x = unwhiten(&(&p + &basis * &sol.w))?;
    if let Some(free) = &sol.free {
        let dir = unwhiten(&(&basis * Mat::from_column_slice(m - 1, 1, free.v.as_slice())))?;
        x = resolve_free(&x, &dir.column(0).into_owned(), free, inst.anchor.as_ref());
    }
    Ok(SolveOutcome { x, objective: f64::NAN, residuals: Vec::new(), iterations: 1, history: vec![sol.mu] })
}
