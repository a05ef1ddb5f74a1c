//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Sized for the small covariance matrices this crate produces (at most
//! 48x48), favoring determinism and zero dependencies over asymptotics.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Off-diagonal Frobenius norm below which iteration stops.
const OFF_DIAG_TOL: f64 = 1e-12;
/// Hard cap on full pivot sweeps.
const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric `n x n` matrix (row-major).
///
/// Returns `(eigenvalues, eigenvectors)` sorted by non-increasing eigenvalue,
/// ties keeping their pre-sort order; eigenvector `j` occupies row `j` of the
/// returned row-major matrix. The input is scaled by its largest absolute
/// entry before iterating so the stopping tolerance is meaningful regardless
/// of the data's magnitude.
pub fn jacobi_eigh(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n);
    let mut ident = vec![0.0; n * n];
    for i in 0..n {
        ident[i * n + i] = 1.0;
    }
    if n == 0 {
        return (Vec::new(), ident);
    }
    let scale = matrix.iter().fold(0.0f64, |m, &v| m.max(math::abs(v)));
    if scale == 0.0 {
        return (vec![0.0; n], ident);
    }
    let mut a: Vec<f64> = matrix.iter().map(|&v| v / scale).collect();
    let mut v = ident;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        if math::sqrt(off) < OFF_DIAG_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + math::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[p * n + i] = a[i * n + p];
                    a[i * n + q] = c * aiq + s * aip;
                    a[q * n + i] = a[i * n + q];
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = c * viq + s * vip;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (row, &j) in order.iter().enumerate() {
        values.push(a[j * n + j] * scale);
        for i in 0..n {
            vectors[row * n + i] = v[i * n + j];
        }
    }
    (values, vectors)
}
