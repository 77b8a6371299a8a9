use super::{CompressedInstance, SfoError, SolveOutcome};
use crate::linalg::{cholesky_lower, sym_eigen_ascending};

/// Condition number above which the covariance is regularized.
pub const MMSE_CONDITION_LIMIT: f64 = 1e12;

/// `X = R⁻¹ E[y sᵀ]`, with diagonal loading `1e-10·tr(R)/M` when `R` is
/// ill-conditioned.
pub(crate) fn solve_mmse(inst: &CompressedInstance) -> Result<SolveOutcome, SfoError> {
    let r = &inst.r_yy;
    let rhs = inst.r_ys.as_ref().ok_or(SfoError::Missing("cross-covariance"))?;
    let m = r.nrows();
    let (vals, _) = sym_eigen_ascending(r);
    let max = vals[m - 1];
    let min = vals[0];
    let mut r = r.clone();
    if max <= 0.0 {
        return Err(SfoError::SingularCovariance);
    }
    if min <= 0.0 || max / min > MMSE_CONDITION_LIMIT {
        let load = 1e-10 * r.trace() / m as f64;
        log::debug!("regularizing ill-conditioned covariance (λ = {min:e}..{max:e}) with {load:e}");
        for i in 0..m {
            r[(i, i)] += load;
        }
    }
    let l = cholesky_lower(&r).ok_or(SfoError::SingularCovariance)?;
    let z = l.solve_lower_triangular(rhs).ok_or(SfoError::SingularCovariance)?;
    let x = l.transpose().solve_upper_triangular(&z).ok_or(SfoError::SingularCovariance)?;
    Ok(SolveOutcome { x, objective: f64::NAN, residuals: Vec::new(), iterations: 1, history: Vec::new() })
}
