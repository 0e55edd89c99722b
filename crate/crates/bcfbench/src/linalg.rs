//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Hermitian eigendecomposition with eigenvalues ascending.
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (vals, vecs)
}

/// Eigenpairs of a general complex matrix: complex Schur form followed by
/// back substitution on the triangular factor.
pub fn eig(a: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    let n = a.nrows();
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Decomposition("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let lam: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = t.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = czero();
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - lam[k];
            if den.norm() < 1e-14 * scale {
                if s.norm() > 1e-10 * scale {
                    return Err(Error::Decomposition(format!("matrix is defective near eigenvalue {}", lam[k])));
                }
                den = Complex64::new(1e-14 * scale, 0.0);
            }
            y[(i, k)] = -s / den;
        }
    }
    let mut v = q * y;
    for k in 0..n {
        let nrm = v.column(k).norm();
        v.column_mut(k).scale_mut(1.0 / nrm);
    }
    Ok((lam, v))
}

/// Eigenvalues only, from the complex Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Decomposition("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..a.nrows()).map(|i| t[(i, i)]).collect())
}

/// Least-squares solution of A x ≈ b through the SVD, truncating singular
/// values below `rcond`·σ_max.
pub fn lstsq(a: &CMat, b: &CVec, rcond: f64) -> Result<CVec> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, rcond * smax)
        .map_err(|e| Error::Numerical { msg: format!("least squares: {e}"), estimate: f64::NAN })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn trace(a: &CMat) -> Complex64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// Matrix exponential (Padé scaling and squaring from nalgebra).
pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}
