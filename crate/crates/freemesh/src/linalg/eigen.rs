//! Cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Plane rotations with the classic threshold schedule; adequate for the
//! moderate orders used by the kernel-validation path, where robustness on
//! symmetric input matters more than asymptotics.

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Eigendecomposition s = V diag(e) V^T of a symmetric matrix.
///
/// Eigenvalues are returned sorted descending, with the columns of V
/// permuted to match. Fails if the input is not symmetric to within
/// 1e-12 relative.
pub fn symmetric_eig(s: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = s.rows();
    if s.cols() != n || n == 0 {
        return Err(Error::Shape(format!(
            "symmetric_eig: {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite {
            what: "symmetric_eig input",
        });
    }
    let scale = s.max_abs();
    let tol = 1e-12 * scale;
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((s.get(i, j) - s.get(j, i)).abs());
        }
    }
    if asym > tol {
        return Err(Error::NotSymmetric { asym, tol });
    }

    let mut a = s.clone();
    let mut v = DenseMatrix::identity(n);
    let mut d: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    let mut b = d.clone();
    let mut z = vec![0.0f64; n];

    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a.get(p, q).abs();
            }
        }
        if off == 0.0 {
            converged = true;
            break;
        }
        // skip tiny rotations during the first sweeps
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let g = 100.0 * apq.abs();
                // after a few sweeps, annihilate entries that are negligible
                // against both diagonal neighbours
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a.set(p, q, 0.0);
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a.set(p, q, 0.0);
                let rotate = |a: &mut DenseMatrix, i: usize, j: usize, k: usize, l: usize| {
                    let g = a.get(i, j);
                    let h = a.get(k, l);
                    a.set(i, j, g - sn * (h + g * tau));
                    a.set(k, l, h + sn * (g - h * tau));
                };
                for j in 0..p {
                    rotate(&mut a, j, p, j, q);
                }
                for j in p + 1..q {
                    rotate(&mut a, p, j, j, q);
                }
                for j in q + 1..n {
                    rotate(&mut a, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }
    if !converged {
        // final check: the off-diagonal may have underflowed on the last sweep
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a.get(p, q).abs();
            }
        }
        if off > f64::EPSILON * scale.max(1.0) * (n * n) as f64 {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    // sort descending, permuting eigenvector columns to match
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap().then(i.cmp(&j)));
    let e: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vs = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            vs.set(i, new_col, v.get(i, old_col));
        }
    }
    Ok((vs, e))
}
