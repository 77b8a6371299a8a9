//! Trust-region style subproblem on a ball or sphere:
//!
//! `min ½tr(WᵀHW) − tr(WᵀG)` s.t. `‖W‖² ≤ r²` (or `= r²`).
//!
//! Stationarity gives `(H + μI)W = G`; in the eigenbasis of `H` the squared
//! norm is `ψ(μ) = Σ w_i/(λ_i + μ)²` with `w_i = ‖(VᵀG)_i‖²`, and the global
//! minimizer corresponds to the rightmost root of `ψ(μ) = r²` with
//! `H + μI ⪰ 0`.

use super::SfoError;
use crate::linalg::sym_eigen_ascending;
use crate::{Mat, Vector};

const MAX_ROOT_ITERATIONS: usize = 500;
const BRACKET_GROWTH_LIMIT: f64 = 1e6;

/// Solution of the ball/sphere subproblem.
#[derive(Debug, Clone)]
pub(crate) struct BallSolution {
    /// Particular part of the solution.
    pub w: Mat,
    /// Multiplier `μ`.
    pub mu: f64,
    /// Hard case: the minimizer set is `w + v zᵀ` with `‖z‖ = omega` (or
    /// `‖z‖ ≤ omega` when `exact` is false), `v` a unit eigenvector of the
    /// smallest eigenvalue.
    pub free: Option<FreeDirection>,
}

#[derive(Debug, Clone)]
pub(crate) struct FreeDirection {
    pub v: Vector,
    pub omega: f64,
    pub exact: bool,
}

fn psi(lambdas: &Vector, weights: &[f64], mu: f64) -> f64 {
    lambdas.iter().zip(weights).map(|(l, w)| w / (l + mu).powi(2)).sum()
}

fn dpsi(lambdas: &Vector, weights: &[f64], mu: f64) -> f64 {
    lambdas.iter().zip(weights).map(|(l, w)| -2.0 * w / (l + mu).powi(3)).sum()
}

/// Largest root of `ψ(μ) = target` on `(lower, ∞)`, given
/// `λ_i + μ > 0` there and `ψ(lower⁺) > target`.
pub(crate) fn secular_root(lambdas: &Vector, weights: &[f64], target: f64, lower: f64) -> Result<f64, SfoError> {
    let total: f64 = weights.iter().sum();
    // ψ(lower + s) ≤ Σw/s², so s = sqrt(Σw/target) always brackets.
    let span = (total / target).sqrt();
    if !span.is_finite() || span <= 0.0 {
        return Err(SfoError::NoRoot);
    }
    let mut width = span * 2f64.powi(-20);
    while psi(lambdas, weights, lower + width) > target {
        width *= 2.0;
        if width > BRACKET_GROWTH_LIMIT * span {
            return Err(SfoError::NoRoot);
        }
    }
    let mut hi = lower + width;
    let mut lo = lower;
    let phi = |mu: f64| 1.0 / psi(lambdas, weights, mu).sqrt() - 1.0 / target.sqrt();
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..MAX_ROOT_ITERATIONS {
        let p = psi(lambdas, weights, mu);
        if (p - target).abs() <= 1e-15 * target {
            return Ok(mu);
        }
        let f = phi(mu);
        if f < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        // φ' = -½ ψ^{-3/2} ψ'
        let df = -0.5 * p.powf(-1.5) * dpsi(lambdas, weights, mu);
        let newton = mu - f / df;
        mu = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Ok(mu)
}

/// Solves the subproblem for a symmetric `H` (`n × n`) and `G` (`n × Q`).
/// `boundary` selects the sphere instead of the ball.
pub(crate) fn solve_ball(h: &Mat, g: &Mat, radius_sq: f64, boundary: bool) -> Result<BallSolution, SfoError> {
    let n = h.nrows();
    let q = g.ncols();
    if n == 0 {
        return Ok(BallSolution { w: Mat::zeros(0, q), mu: 0.0, free: None });
    }
    let (lambdas, vecs) = sym_eigen_ascending(h);
    let b = vecs.transpose() * g;
    let weights: Vec<f64> = (0..n).map(|i| b.row(i).norm_squared()).collect();
    let total: f64 = weights.iter().sum();
    let scale = lambdas.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
    let lambda_min = lambdas[0];
    let combine = |mu: f64, skip: usize| {
        let mut coeffs = Mat::zeros(n, q);
        for i in skip..n {
            let denom = lambdas[i] + mu;
            if denom.abs() > 0.0 {
                coeffs.set_row(i, &(b.row(i) / denom));
            }
        }
        &vecs * coeffs
    };

    if radius_sq <= 0.0 {
        return Ok(BallSolution { w: Mat::zeros(n, q), mu: 0.0, free: None });
    }

    let pd_tol = 1e-12 * scale;
    if !boundary && lambda_min > pd_tol && psi(&lambdas, &weights, 0.0) <= radius_sq {
        return Ok(BallSolution { w: combine(0.0, 0), mu: 0.0, free: None });
    }

    let lower = if boundary { -lambda_min } else { (-lambda_min).max(0.0) };
    // Singular PSD H with the ball constraint inactive on the range of H.
    let at_lower_is_min_eig = boundary || lambda_min <= pd_tol;
    let cluster = lambdas.iter().take_while(|l| **l <= lambda_min + pd_tol).count();
    let cluster_weight: f64 = weights[..cluster].iter().sum();
    if at_lower_is_min_eig && cluster_weight <= 1e-24 * total.max(f64::MIN_POSITIVE) {
        let mu = -lambda_min;
        let rest = &lambdas.rows(cluster, n - cluster).into_owned();
        let rest_psi = psi(rest, &weights[cluster..], mu);
        if rest_psi <= radius_sq {
            let w = combine(mu, cluster);
            let omega = (radius_sq - w.norm_squared()).max(0.0).sqrt();
            let exact = boundary || lambda_min < -pd_tol;
            let free = FreeDirection { v: vecs.column(0).into_owned(), omega, exact };
            return Ok(BallSolution { w, mu: if boundary { mu } else { mu.max(0.0) }, free: Some(free) });
        }
    }

    let mu = secular_root(&lambdas, &weights, radius_sq, lower)?;
    let mut w = combine(mu, 0);
    let norm_sq = w.norm_squared();
    if norm_sq > 0.0 && (boundary || norm_sq > radius_sq) {
        w *= (radius_sq / norm_sq).sqrt();
    }
    Ok(BallSolution { w, mu, free: None })
}

/// Picks the free component of a hard-case solution: `x_p + u zᵀ` with
/// `‖z‖ = ω` (or `≤ ω`), `z` chosen to minimize the distance to `anchor`.
pub(crate) fn resolve_free(x_p: &Mat, u: &Vector, free: &FreeDirection, anchor: Option<&Mat>) -> Mat {
    let q = x_p.ncols();
    let u_sq = u.norm_squared();
    if free.omega == 0.0 || u_sq == 0.0 {
        return x_p.clone();
    }
    let pull = anchor.map(|a| (a - x_p).transpose() * u);
    let mut z = match &pull {
        Some(p) if p.norm() > 0.0 => p.clone(),
        _ => {
            let mut e = Vector::zeros(q);
            e[0] = 1.0;
            e
        }
    };
    let z_norm = z.norm();
    let unconstrained = pull.as_ref().map(|p| p.norm() / u_sq).unwrap_or(0.0);
    let length = if free.exact { free.omega } else { unconstrained.min(free.omega) };
    z *= length / z_norm;
    x_p + u * z.transpose()
}
