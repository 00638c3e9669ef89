//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative pivot tolerance for every Cholesky factorization in the crate.
pub const PIVOT_TOL: f64 = 1e-10;

/// Cholesky factorization that also rejects nearly singular matrices: every
/// squared pivot must exceed `PIVOT_TOL` times the largest diagonal entry.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0_f64, |acc, &d| acc.max(d.abs()));
    if !(scale.is_finite()) || scale <= 0.0 {
        return None;
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        let piv = l[(i, i)];
        if !(piv * piv > PIVOT_TOL * scale) {
            return None;
        }
    }
    Some(chol)
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// `xᵀ M⁻¹ x` from the factor of `M`.
pub fn quad_inv(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let mut w = x.clone();
    // forward substitution on the lower factor only; l_dirty's upper part is garbage
    let n = w.len();
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    w.norm_squared()
}

/// `tr(M⁻¹ A)` for symmetric `A`.
pub fn trace_inv_product(chol: &Cholesky<f64, Dyn>, a: &DMatrix<f64>) -> f64 {
    let sol = chol.solve(a);
    sol.trace()
}

/// True if `r` is symmetric with unit diagonal and positive definite.
pub fn is_correlation(r: &DMatrix<f64>) -> bool {
    let p = r.nrows();
    if r.ncols() != p {
        return false;
    }
    for i in 0..p {
        if (r[(i, i)] - 1.0).abs() > 1e-12 {
            return false;
        }
        for j in 0..i {
            if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 || r[(i, j)].abs() >= 1.0 {
                return false;
            }
        }
    }
    cholesky(r).is_some()
}

/// Split a symmetric positive definite `E` into `D^{1/2} R D^{1/2}`; returns
/// the diagonal of `D` (variances) and the correlation matrix `R`.
pub fn split_covariance(e: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = e.nrows();
    let d: Vec<f64> = (0..p).map(|i| e[(i, i)]).collect();
    let mut r = DMatrix::identity(p, p);
    for i in 0..p {
        for j in 0..i {
            let v = e[(i, j)] / (d[i] * d[j]).sqrt();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    (d, r)
}

pub fn compose_covariance(d: &[f64], r: &DMatrix<f64>) -> DMatrix<f64> {
    let p = r.nrows();
    DMatrix::from_fn(p, p, |i, j| r[(i, j)] * (d[i] * d[j]).sqrt())
}

/// Lower-triangular solve `L x = b` using only the lower part of `l`.
pub fn forward_solve(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Upper-triangular solve `Lᵀ x = b` using only the lower part of `l`.
pub fn backward_solve_transposed(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_rejects_singular_and_indefinite() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(&singular).is_none());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&indefinite).is_none());
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = cholesky(&spd).unwrap();
        assert!((log_det(&c) - (2.0f64 - 0.25).ln()).abs() < 1e-14);
    }

    #[test]
    fn quad_and_trace_match_explicit_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = m.clone().try_inverse().unwrap();
        let c = cholesky(&m).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let want = (x.transpose() * &inv * &x)[(0, 0)];
        assert!((quad_inv(&c, &x) - want).abs() < 1e-12);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 2.0, 0.1, 0.0, 0.1, 1.5]);
        assert!((trace_inv_product(&c, &a) - (&inv * &a).trace()).abs() < 1e-12);
    }

    #[test]
    fn split_then_compose_is_identity() {
        let e = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 9.0, 0.2, 0.5, 0.2, 16.0]);
        let (d, r) = split_covariance(&e);
        assert!(is_correlation(&r));
        let back = compose_covariance(&d, &r);
        assert!((back - e).abs().max() < 1e-12);
    }
}
