//! Independent reference solvers used only by tests. They share no code with
//! the library solvers: first-order methods run to stagnation, brute-force
//! grids and bisection on scalar characterizations of the optimum.

#![allow(dead_code)]

use dasf::sfo::{CompressedInstance, ProblemKind, SfoProblem};
use dasf::{Mat, Vector};
use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random symmetric positive definite matrix with eigenvalues in
/// `[floor, floor + O(m)]`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, floor: f64) -> Mat {
    let a = gaussian(rng, m, m);
    &a * a.transpose() / m as f64 + Mat::identity(m, m) * floor
}

fn largest_eigenvalue(a: &Mat) -> f64 {
    // Power iteration on a PSD matrix.
    let mut v = Vector::from_element(a.nrows(), 1.0);
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let w = a * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w) / v.dot(&v);
        v = w / n;
    }
    lambda * 1.01 + 1e-12
}

/// `Γ^{-1/2}` via the symmetric eigendecomposition.
pub fn inv_sqrt(gamma: &Mat) -> Mat {
    let e = SymmetricEigen::new(gamma.clone());
    let d = e.eigenvalues.map(|l| 1.0 / l.sqrt());
    &e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose()
}

fn tr_prod(a: &Mat, b: &Mat) -> f64 {
    (a.transpose() * b).trace()
}

/// MMSE objective `p − 2tr(Xᵀr) + tr(XᵀRX)` minimized by gradient descent.
pub fn mmse_gradient_descent(r: &Mat, rhs: &Mat) -> Mat {
    let step = 1.0 / (2.0 * largest_eigenvalue(r));
    let mut x = Mat::zeros(rhs.nrows(), rhs.ncols());
    for _ in 0..2_000_000 {
        let grad = (r * &x - rhs) * 2.0;
        if grad.norm() < 1e-14 {
            break;
        }
        x -= grad * step;
    }
    x
}

/// Projected gradient for `min ½tr(XᵀRX) − tr(XᵀA)` over
/// `{Xᵀc = d} ∩ {tr(XᵀΓX) ≤ α²}`, in whitened coordinates `Z = Γ^{1/2}X`.
pub fn qcqp_projected_gradient(r: &Mat, a: &Mat, c: &Vector, d: &Vector, alpha: f64, gamma: &Mat) -> Mat {
    let w = inv_sqrt(gamma); // X = W Z
    let rz = &w * r * &w;
    let az = &w * a;
    let cz = &w * c;
    let cc = cz.norm_squared();
    let center = &cz * d.transpose() / cc;
    let radius_sq = alpha * alpha - center.norm_squared();
    let project = |z: &Mat| {
        let mut z = z - &cz * (z.transpose() * &cz - d).transpose() / cc;
        let off = &z - &center;
        let n2 = off.norm_squared();
        if n2 > radius_sq {
            z = &center + off * (radius_sq.max(0.0) / n2).sqrt();
        }
        z
    };
    let step = 1.0 / largest_eigenvalue(&rz);
    let mut z = project(&Mat::zeros(a.nrows(), a.ncols()));
    for _ in 0..500_000 {
        let next = project(&(&z - (&rz * &z - &az) * step));
        let change = (&next - &z).norm();
        z = next;
        if change < 1e-15 {
            break;
        }
    }
    w * z
}

fn top_sum(a: &Mat, gamma_inv_sqrt: &Mat, q: usize) -> f64 {
    let c = gamma_inv_sqrt * a * gamma_inv_sqrt;
    let c = (&c + c.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals[..q].iter().sum()
}

/// Optimal trace ratio: the unique root of
/// `ρ ↦ max_{XᵀΓX=I} tr(Xᵀ(R_vv − ρR_yy)X)`, found by bisection.
pub fn tro_ratio_bisection(rvv: &Mat, ryy: &Mat, gamma: &Mat, q: usize) -> f64 {
    let w = inv_sqrt(gamma);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while top_sum(&(rvv - ryy * lo), &w, q) < 0.0 {
        lo *= 2.0;
    }
    while top_sum(&(rvv - ryy * hi), &w, q) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if top_sum(&(rvv - ryy * mid), &w, q) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exhaustive search over the unit circle for a 2-channel, single-output
/// trace ratio.
pub fn tro_circle_grid(rvv: &Mat, ryy: &Mat, resolution: f64) -> (f64, Vector) {
    let mut best = (f64::NEG_INFINITY, Vector::zeros(2));
    let steps = (std::f64::consts::PI / resolution).ceil() as usize;
    for i in 0..steps {
        let t = i as f64 * resolution;
        let x = Vector::from_vec(vec![t.cos(), t.sin()]);
        let ratio = x.dot(&(rvv * &x)) / x.dot(&(ryy * &x));
        if ratio > best.0 {
            best = (ratio, x);
        }
    }
    best
}

/// Riemannian gradient descent for `min ½xᵀRx + aᵀx` on `xᵀΓx = 1`, best of
/// `restarts` random starts.
pub fn scqp_sphere_descent(r: &Mat, a: &Mat, gamma: &Mat, restarts: usize, seed: u64) -> (f64, Mat) {
    let w = inv_sqrt(gamma);
    let rz = &w * r * &w;
    let az = &w * a;
    let obj = |z: &Mat| 0.5 * tr_prod(z, &(&rz * z)) + tr_prod(z, &az);
    let step = 1.0 / (largest_eigenvalue(&rz) + az.norm() + 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, Mat::zeros(a.nrows(), a.ncols()));
    for _ in 0..restarts {
        let mut z = gaussian(&mut rng, a.nrows(), a.ncols());
        z /= z.norm();
        for _ in 0..200_000 {
            let g = &rz * &z + &az;
            let riem = &g - &z * tr_prod(&z, &g);
            if riem.norm() < 1e-13 {
                break;
            }
            let mut next = &z - riem * step;
            next /= next.norm();
            z = next;
        }
        let f = obj(&z);
        if f < best.0 {
            best = (f, &w * z);
        }
    }
    best
}

/// Random small instance of the given family together with the problem
/// whose solver should be used on it.
pub struct RandomInstance {
    pub problem: SfoProblem,
    pub instance: CompressedInstance,
}

pub fn random_instance(kind: &str, rng: &mut ChaCha8Rng) -> RandomInstance {
    let m = rng.random_range(2..=12);
    let identity_metric = rng.random_bool(0.5);
    let metric = if identity_metric { Mat::identity(m, m) } else { random_spd(rng, m, 0.3) };
    let r = random_spd(rng, m, 0.05);
    match kind {
        "mmse" => {
            let q = rng.random_range(1..=3);
            let rhs = gaussian(rng, m, q);
            let problem = SfoProblem::mmse(vec![m], q).unwrap();
            let instance = CompressedInstance {
                q,
                r_yy: r,
                r_vv: None,
                r_ys: Some(rhs),
                target_power: Some(1.0),
                linear: None,
                equality: None,
                metric,
                anchor: None,
            };
            RandomInstance { problem, instance }
        }
        "qcqp" => {
            let q = rng.random_range(1..=3.min(m - 1));
            let a = gaussian(rng, m, q);
            let c = Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = Vector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = inv_sqrt(&metric);
            let bound = (d.norm_squared() / (&w * &c).norm_squared()).max(d.norm_squared() / c.norm_squared());
            let alpha = (bound * (1.0 + rng.random_range(0.05..3.0))).sqrt();
            let problem = SfoProblem::qcqp(vec![m], a.clone(), c.clone(), d, alpha).unwrap();
            let instance = CompressedInstance {
                q,
                r_yy: r,
                r_vv: None,
                r_ys: None,
                target_power: None,
                linear: Some(a),
                equality: Some(c),
                metric,
                anchor: Some(gaussian(rng, m, q)),
            };
            RandomInstance { problem, instance }
        }
        "tro" => {
            let q = rng.random_range(1..=3.min(m - 1));
            let rvv = random_spd(rng, m, 0.0) + &r;
            let problem = SfoProblem::tro(vec![m], q).unwrap();
            let anchor = rng.random_bool(0.5).then(|| gaussian(rng, m, q));
            let instance = CompressedInstance {
                q,
                r_yy: r,
                r_vv: Some(rvv),
                r_ys: None,
                target_power: None,
                linear: None,
                equality: None,
                metric,
                anchor,
            };
            RandomInstance { problem, instance }
        }
        "scqp" => {
            let a = gaussian(rng, m, 1);
            let problem = SfoProblem::scqp(vec![m], a.clone()).unwrap();
            let instance = CompressedInstance {
                q: 1,
                r_yy: r,
                r_vv: None,
                r_ys: None,
                target_power: None,
                linear: Some(a),
                equality: None,
                metric,
                anchor: Some(gaussian(rng, m, 1)),
            };
            RandomInstance { problem, instance }
        }
        other => panic!("unknown family {other}"),
    }
}

/// Oracle objective value for an instance.
pub fn oracle_objective(ri: &RandomInstance, seed: u64) -> f64 {
    let inst = &ri.instance;
    match ri.problem.kind() {
        ProblemKind::Mmse => {
            let x = mmse_gradient_descent(&inst.r_yy, inst.r_ys.as_ref().unwrap());
            ri.problem.instance_objective(inst, &x)
        }
        ProblemKind::Qcqp { alpha, d } => {
            let x = qcqp_projected_gradient(
                &inst.r_yy,
                inst.linear.as_ref().unwrap(),
                inst.equality.as_ref().unwrap(),
                d,
                *alpha,
                &inst.metric,
            );
            ri.problem.instance_objective(inst, &x)
        }
        ProblemKind::Tro => -tro_ratio_bisection(inst.r_vv.as_ref().unwrap(), &inst.r_yy, &inst.metric, inst.q),
        ProblemKind::Scqp => scqp_sphere_descent(&inst.r_yy, inst.linear.as_ref().unwrap(), &inst.metric, 20, seed).0,
    }
}
