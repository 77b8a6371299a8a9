use super::{CompressedInstance, SfoError, SolveOutcome};
use crate::linalg::{gen_sym_eigen_ascending, metric_orthonormalize, procrustes_rotation};
use crate::Mat;

/// Iteration cap of the ratio iteration.
pub const TRO_MAX_ITERATIONS: usize = 200;
/// Relative stopping tolerance on the ratio.
pub const TRO_TOLERANCE: f64 = 1e-10;

fn ratio(inst: &CompressedInstance, rvv: &Mat, x: &Mat) -> f64 {
    let num = x.component_mul(&(rvv * x)).sum();
    let den = x.component_mul(&(&inst.r_yy * x)).sum();
    num / den
}

/// `Q` dominant generalized eigenvectors of `(A, Γ)`. When the `Q`-th
/// eigenvalue belongs to a cluster that straddles the cut, the part of the
/// basis taken from the cluster is the one closest to `anchor`.
fn dominant_subspace(a: &Mat, metric: &Mat, q: usize, anchor: Option<&Mat>) -> Result<Mat, SfoError> {
    let (vals, vecs) = gen_sym_eigen_ascending(a, metric).ok_or(SfoError::NonPdMetric)?;
    let n = vals.len();
    let cut = n - q;
    let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    let pivot = vals[cut];
    let degenerate = cut > 0 && vals[cut - 1] >= pivot - tol;
    let anchor = match (degenerate, anchor) {
        (true, Some(a)) => a,
        _ => return Ok(vecs.columns(cut, q).into_owned()),
    };
    let lo = (0..n).find(|&i| vals[i] >= pivot - tol).unwrap_or(cut);
    let hi = (cut..n).take_while(|&i| vals[i] <= pivot + tol).last().unwrap_or(cut) + 1;
    let fixed = n - hi;
    let from_cluster = q - fixed;
    let cluster = vecs.columns(lo, hi - lo).into_owned();
    // Coordinates of the anchor in the cluster (Γ-inner product).
    let coords = cluster.transpose() * metric * anchor;
    let svd = coords.svd(true, false);
    let u = svd.u.expect("svd computed with u");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut chosen = Mat::zeros(cluster.ncols(), from_cluster);
    for (dst, &src) in order.iter().take(from_cluster).enumerate() {
        chosen.set_column(dst, &u.column(src));
    }
    let mut out = Mat::zeros(n, q);
    out.columns_mut(0, from_cluster).copy_from(&(&cluster * chosen));
    if fixed > 0 {
        out.columns_mut(from_cluster, fixed).copy_from(&vecs.columns(hi, fixed));
    }
    Ok(out)
}

/// Maximizes `tr(XᵀR_vvX)/tr(XᵀR_yyX)` over `XᵀΓX = I` by the ratio
/// iteration `X ← dominant eigenvectors of (R_vv − ρR_yy, Γ)`,
/// `ρ ← ratio(X)`.
pub(crate) fn solve_tro(inst: &CompressedInstance) -> Result<SolveOutcome, SfoError> {
    let rvv = inst.r_vv.as_ref().ok_or(SfoError::Missing("v covariance"))?;
    let q = inst.q;
    let anchor = inst.anchor.as_ref();
    let start = anchor.and_then(|a| metric_orthonormalize(a, &inst.metric));
    let mut rho = match &start {
        Some(x0) => ratio(inst, rvv, x0),
        None => 0.0,
    };
    let mut history = vec![rho];
    let mut last_change = f64::INFINITY;
    for it in 1..=TRO_MAX_ITERATIONS {
        let pencil = rvv - &inst.r_yy * rho;
        let mut x = dominant_subspace(&pencil, &inst.metric, q, anchor)?;
        let next = ratio(inst, rvv, &x);
        history.push(next);
        last_change = (next - rho).abs();
        let converged = last_change <= TRO_TOLERANCE * rho.abs().max(1.0);
        rho = next;
        if converged {
            if let Some(a) = anchor {
                x = &x * procrustes_rotation(&x, a);
            }
            return Ok(SolveOutcome { x, objective: -rho, residuals: Vec::new(), iterations: it, history });
        }
    }
    Err(SfoError::NoConvergence { iterations: TRO_MAX_ITERATIONS, last_change })
}
