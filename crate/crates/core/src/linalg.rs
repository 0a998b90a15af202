//! Small dense symmetric linear algebra: just enough for PCA features and
//! the Gaussian-fit distance.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// rows of a `n x n` row-major matrix.
pub fn sym_eigen<F: Scalar>(matrix: &[F], n: usize) -> Result<(Vec<F>, Vec<F>)> {
    if matrix.len() != n * n {
        return Err(Error::RejectedInput(format!(
            "matrix has {} entries, expected {}",
            matrix.len(),
            n * n
        )));
    }
    let mut a = matrix.to_vec();
    // v starts as identity; rows accumulate the rotations.
    let mut v = vec![F::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = F::one();
    }

    let off_norm = |a: &[F]| -> F {
        let mut s = F::zero();
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += a[p * n + q] * a[p * n + q];
                }
            }
        }
        s.sqrt()
    };
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(F::from_f64(1e-300), F::max);
    let tol = F::from_f64(1e-14) * scale * F::from_usize(n);

    for _sweep in 0..100 {
        if off_norm(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / F::from_usize(n * n) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (F::from_f64(2.0) * apq);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (F::one() + theta * theta).sqrt())
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigvals: Vec<F> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigvecs = vec![F::zero(); n * n];
    for (row, &i) in order.iter().enumerate() {
        eigvecs[row * n..(row + 1) * n].copy_from_slice(&v[i * n..(i + 1) * n]);
    }
    Ok((eigvals, eigvecs))
}

/// `C = A * B` for square row-major matrices.
pub fn matmul_square<F: Scalar>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == F::zero() {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aik * *bv;
            }
        }
    }
    c
}

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues
/// clamped at zero.
pub fn sym_sqrt<F: Scalar>(matrix: &[F], n: usize) -> Result<Vec<F>> {
    let (vals, vecs) = sym_eigen(matrix, n)?;
    let mut out = vec![F::zero(); n * n];
    for (r, lam) in vals.iter().enumerate() {
        let s = lam.max(F::zero()).sqrt();
        if s == F::zero() {
            continue;
        }
        let row = &vecs[r * n..(r + 1) * n];
        for i in 0..n {
            let si = s * row[i];
            for j in 0..n {
                out[i * n + j] += si * row[j];
            }
        }
    }
    Ok(out)
}

pub fn trace<F: Scalar>(a: &[F], n: usize) -> F {
    (0..n).map(|i| a[i * n + i]).sum()
}
