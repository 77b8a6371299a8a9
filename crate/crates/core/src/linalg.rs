//! Small dense linear-algebra helpers shared by the solvers and the engine.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::{Mat, Vector};

/// Returns `(A + Aᵀ)/2`.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// ascending order. Columns of the returned matrix are the matching
/// orthonormal eigenvectors.
pub fn sym_eigen_ascending(a: &Mat) -> (Vector, Mat) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric-definite generalized eigenproblem `A v = λ B v`.
///
/// Eigenvalues are returned in ascending order; eigenvectors are
/// `B`-orthonormal (`VᵀBV = I`). Returns `None` when `B` is not positive
/// definite.
pub fn gen_sym_eigen_ascending(a: &Mat, b: &Mat) -> Option<(Vector, Mat)> {
    let chol = Cholesky::new(symmetrize(b))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l.solve_lower_triangular(a)?;
    let c = l.solve_lower_triangular(&linv_a.transpose())?;
    let (values, w) = sym_eigen_ascending(&c);
    let vectors = l.transpose().solve_upper_triangular(&w)?;
    Some((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: &Mat) -> Option<Mat> {
    Cholesky::<f64, Dyn>::new(symmetrize(a)).map(|c| c.l())
}

/// Orthonormal basis (columns) of the orthogonal complement of a non-zero
/// vector, built from a Householder reflector.
pub fn complement_basis(c: &Vector) -> Mat {
    let n = c.len();
    let u = c / c.norm();
    // H = I - 2 w wᵀ / (wᵀw) maps e₁ onto ∓u; its remaining columns span u⊥.
    let mut w = u.clone();
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let ww = w.dot(&w);
    let h = Mat::identity(n, n) - (&w * w.transpose()) * (2.0 / ww);
    h.columns(1, n - 1).into_owned()
}

/// Orthogonal `U` minimizing `‖X U − A‖_F` (orthogonal Procrustes).
pub fn procrustes_rotation(x: &Mat, a: &Mat) -> Mat {
    let m = x.transpose() * a;
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    u * v_t
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of equally wide matrices.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Splits the rows of `x` into consecutive blocks with the given heights.
pub fn split_rows(x: &Mat, heights: &[usize]) -> Vec<Mat> {
    let mut out = Vec::with_capacity(heights.len());
    let mut r = 0;
    for &h in heights {
        out.push(x.rows(r, h).into_owned());
        r += h;
    }
    out
}

/// `XᵀX`-orthonormalization in the metric `G`: returns `X (XᵀGX)^{-1/2}`,
/// or `None` when `XᵀGX` is singular.
pub fn metric_orthonormalize(x: &Mat, metric: &Mat) -> Option<Mat> {
    let gram = x.transpose() * metric * x;
    let (vals, vecs) = sym_eigen_ascending(&gram);
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if vals[0] <= 1e-14 * scale {
        return None;
    }
    let inv_sqrt = Mat::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Some(x * (&vecs * inv_sqrt * vecs.transpose()))
}
