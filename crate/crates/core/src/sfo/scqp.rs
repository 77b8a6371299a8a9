use super::secular::{resolve_free, solve_ball};
use super::{CompressedInstance, SfoError, SolveOutcome};
use crate::linalg::cholesky_lower;
use crate::Mat;

/// `min ½tr(XᵀRX) + tr(XᵀA)` s.t. `tr(XᵀΓX) = 1`, solved as a
/// sphere-constrained quadratic in `Z = LᵀX`.
pub(crate) fn solve_scqp(inst: &CompressedInstance) -> Result<SolveOutcome, SfoError> {
    let a = inst.linear.as_ref().ok_or(SfoError::Missing("linear term"))?;
    let l = cholesky_lower(&inst.metric).ok_or(SfoError::NonPdMetric)?;
    let lt = l.transpose();
    let whiten = |x: &Mat| l.solve_lower_triangular(x).ok_or(SfoError::NonPdMetric);
    let unwhiten = |z: &Mat| lt.solve_upper_triangular(z).ok_or(SfoError::NonPdMetric);

    let r_w = whiten(&whiten(&inst.r_yy)?.transpose())?;
    let g = -whiten(a)?;
    let sol = solve_ball(&r_w, &g, 1.0, true)?;
    let mut x = unwhiten(&sol.w)?;
    if let Some(free) = &sol.free {
        let n = free.v.len();
        let dir = unwhiten(&Mat::from_column_slice(n, 1, free.v.as_slice()))?;
        x = resolve_free(&x, &dir.column(0).into_owned(), free, inst.anchor.as_ref());
    }
    Ok(SolveOutcome { x, objective: f64::NAN, residuals: Vec::new(), iterations: 1, history: vec![sol.mu] })
}
