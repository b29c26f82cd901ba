//! Factored Gaussian RBF kernel: direct Gramian, Hermite-number expansion
//! matrix, rank-limited factorization and its generalized inverse, and the
//! shape-parameter-free mesh-to-mesh transfer.

use crate::error::{Error, Result};
use crate::linalg::{qr_factor, DenseMatrix, HouseholderQr, QrFactors};
use crate::multiindex::MomentBasis;
use rayon::prelude::*;

/// Relative pivot threshold for the factored-inverse path: eigenvalues and
/// shape-parameter powers whose magnitude falls below this fraction of the
/// largest signal flat-limit breakdown.
pub const INVERSE_PIVOT_RTOL: f64 = 1e-14;

/// Degree scaling that ties the Hermite-number normalization used by
/// [`t_matrix`] (h_2(0) = -1, which expands exp(-t^2/2)) to the kernel
/// width exp(-eps^2 r^2): the degree diagonal is built from sqrt(2)*eps.
pub const EFFECTIVE_SHAPE_FACTOR: f64 = std::f64::consts::SQRT_2;

/// Gaussian RBF shape parameter; positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParameter {
    eps: f64,
}

impl ShapeParameter {
    pub fn new(eps: f64) -> Result<Self> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "shape parameter must be positive and finite, got {eps}"
            )));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// exp(-eps^2 |x_a - x_b|^2); value in (0, 1].
pub fn gaussian_rbf(x_a: [f64; 3], x_b: [f64; 3], shape: ShapeParameter) -> f64 {
    let d2: f64 = x_a.iter().zip(&x_b).map(|(a, b)| (a - b) * (a - b)).sum();
    (-shape.eps * shape.eps * d2).exp()
}

/// Hermite number h_alpha(0): zero for odd alpha, (-1)^(alpha/2) (alpha-1)!!
/// for even alpha, computed by the recurrence h_{a+2}(0) = -(a+1) h_a(0).
pub fn hermite_number(alpha: usize) -> f64 {
    if alpha % 2 == 1 {
        return 0.0;
    }
    let mut h = 1.0f64;
    let mut a = 0usize;
    while a + 2 <= alpha {
        h *= -((a + 1) as f64);
        a += 2;
    }
    h
}

/// Expansion matrix T over the basis columns:
/// T[(l,m,n),(l',m',n')] = (-1)^(l+m+n) h_{l+l'}(0) h_{m+m'}(0) h_{n+n'}(0).
///
/// Entries are nonzero only when l+l', m+m', n+n' are all even, which also
/// makes T symmetric (the sign factors agree by parity).
pub fn t_matrix(basis: &MomentBasis) -> DenseMatrix {
    let rank = basis.rank();
    let lmax = basis.lmax();
    let hermite: Vec<f64> = (0..=2 * lmax).map(hermite_number).collect();
    let mut t = DenseMatrix::zeros(rank, rank);
    let ix = basis.indices();
    for a in 0..rank {
        let sign = if ix[a].total_degree() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        for b in 0..rank {
            t.set(
                a,
                b,
                sign * hermite[ix[a].l + ix[b].l]
                    * hermite[ix[a].m + ix[b].m]
                    * hermite[ix[a].n + ix[b].n],
            );
        }
    }
    t
}

/// Direct Gramian: symmetric with unit diagonal.
pub fn kernel_direct(points: &[[f64; 3]], shape: ShapeParameter) -> DenseMatrix {
    let n = points.len();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        g.set(i, i, 1.0);
        for j in i + 1..n {
            let v = gaussian_rbf(points[i], points[j], shape);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}

/// Degree powers of the effective shape parameter, in basis column order:
/// entry at column (l,m,n) is (sqrt(2) eps)^(l+m+n).
fn eps_degree_diag(shape: ShapeParameter, basis: &MomentBasis) -> Vec<f64> {
    let eps_eff = EFFECTIVE_SHAPE_FACTOR * shape.eps;
    let mut powers = vec![1.0f64; basis.lmax() + 1];
    for k in 1..=basis.lmax() {
        powers[k] = powers[k - 1] * eps_eff;
    }
    basis
        .indices()
        .iter()
        .map(|ix| powers[ix.total_degree()])
        .collect()
}

/// Exactly symmetric product C B^T where only the upper triangle is
/// computed and mirrored.
fn symmetric_product(c: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = c.rows();
    debug_assert_eq!(b.rows(), n);
    debug_assert_eq!(b.cols(), c.cols());
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let ci = c.row(i);
        for j in i..n {
            let v: f64 = ci.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Rank-limited kernel via the factored form Lambda eps T eps Lambda^T.
///
/// Symmetric by construction; converges entrywise to [`kernel_direct`] as
/// the basis order grows (for shape*diameter small enough that the total
/// degree window captures the expansion).
pub fn kernel_factored(
    points: &[[f64; 3]],
    shape: ShapeParameter,
    basis: &MomentBasis,
) -> DenseMatrix {
    let lambda = basis.vandermonde(points);
    let diag = eps_degree_diag(shape, basis);
    let mut scaled = lambda;
    for i in 0..scaled.rows() {
        let row = scaled.row_mut(i);
        for (v, d) in row.iter_mut().zip(&diag) {
            *v *= d;
        }
    }
    let t = t_matrix(basis);
    let c = scaled.matmul(&t).expect("shape checked");
    symmetric_product(&c, &scaled)
}

/// The pieces of the factored kernel and its generalized inverse.
#[derive(Debug, Clone)]
pub struct KernelFactorization {
    pub basis: MomentBasis,
    pub shape: ShapeParameter,
    /// Vandermonde of the point set, N x rank.
    pub lambda: DenseMatrix,
    /// Degree powers of the effective shape parameter, basis order.
    pub eps_diag: Vec<f64>,
    /// Expansion matrix, rank x rank.
    pub t: DenseMatrix,
    /// QR factors of lambda.
    pub qr: QrFactors,
    /// Eigenvectors of t (columns), rank x rank.
    pub v: DenseMatrix,
    /// Eigenvalues of t, descending.
    pub e: Vec<f64>,
}

impl KernelFactorization {
    /// Assembles every factor. Requires at least rank points so the
    /// Vandermonde QR is defined.
    pub fn new(points: &[[f64; 3]], shape: ShapeParameter, basis: &MomentBasis) -> Result<Self> {
        let rank = basis.rank();
        if points.len() < rank {
            return Err(Error::InsufficientPoints {
                needed: rank,
                got: points.len(),
            });
        }
        let lambda = basis.vandermonde(points);
        let qr = qr_factor(&lambda)?;
        let t = t_matrix(basis);
        let (v, e) = crate::linalg::symmetric_eig(&t)?;
        Ok(Self {
            basis: basis.clone(),
            shape,
            eps_diag: eps_degree_diag(shape, basis),
            lambda,
            t,
            qr,
            v,
            e,
        })
    }

    /// The factored kernel Lambda eps T eps Lambda^T for this point set.
    pub fn kernel(&self) -> DenseMatrix {
        let mut scaled = self.lambda.clone();
        for i in 0..scaled.rows() {
            let row = scaled.row_mut(i);
            for (val, d) in row.iter_mut().zip(&self.eps_diag) {
                *val *= d;
            }
        }
        let c = scaled.matmul(&self.t).expect("shape checked");
        symmetric_product(&c, &scaled)
    }
}

/// Solves R^T y = w (forward substitution; R upper triangular, full rank).
fn solve_rt_columns(r: &DenseMatrix, w: &DenseMatrix) -> DenseMatrix {
    let k = r.rows();
    let cols = w.cols();
    let mut y = DenseMatrix::zeros(k, cols);
    for c in 0..cols {
        for i in 0..k {
            let mut s = w.get(i, c);
            for j in 0..i {
                s -= r.get(j, i) * y.get(j, c);
            }
            y.set(i, c, s / r.get(i, i));
        }
    }
    y
}

/// Generalized inverse of the factored kernel:
/// G = Q R^-T eps^-1 V e^-1 V^T eps^-1 R^-1 Q^T.
///
/// Requires full effective rank and eigenvalue / shape-power magnitudes
/// above [`INVERSE_PIVOT_RTOL`] relative to their largest entries; below
/// that the flat-limit ill-conditioning is signalled as an error rather
/// than silently producing garbage.
pub fn kernel_inverse_factored(fact: &KernelFactorization) -> Result<DenseMatrix> {
    let rank = fact.basis.rank();
    if fact.qr.effective_rank < rank {
        return Err(Error::RankDeficient {
            effective: fact.qr.effective_rank,
            required: rank,
        });
    }
    let e_max = fact.e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(i) = fact
        .e
        .iter()
        .position(|v| v.abs() <= INVERSE_PIVOT_RTOL * e_max)
    {
        return Err(Error::IllConditioned {
            what: format!(
                "expansion-matrix eigenvalue {} ({:.3e} of max {:.3e})",
                i, fact.e[i], e_max
            ),
        });
    }
    let d_max = fact.eps_diag.iter().fold(0.0f64, |m, v| m.max(*v));
    if let Some(i) = fact
        .eps_diag
        .iter()
        .position(|v| *v <= INVERSE_PIVOT_RTOL * d_max)
    {
        return Err(Error::IllConditioned {
            what: format!(
                "shape-parameter power at column {} ({:.3e} of max {:.3e})",
                i, fact.eps_diag[i], d_max
            ),
        });
    }

    // M = V e^-1 V^T, exactly symmetric
    let mut ve = fact.v.clone();
    for i in 0..rank {
        for j in 0..rank {
            ve.set(i, j, fact.v.get(i, j) / fact.e[j]);
        }
    }
    let m = symmetric_product(&ve, &fact.v);

    // W = eps^-1 M eps^-1
    let mut w = m;
    for i in 0..rank {
        for j in 0..rank {
            let v = w.get(i, j) / (fact.eps_diag[i] * fact.eps_diag[j]);
            w.set(i, j, v);
        }
    }

    // X = R^-T W R^-1 via two triangular solves
    let r = &fact.qr.r;
    let y = solve_rt_columns(r, &w);
    let x = solve_rt_columns(r, &y.transpose()).transpose();

    // G = Q X Q^T
    let qx = fact.qr.q.matmul(&x).expect("shape checked");
    Ok(symmetric_product(&qx, &fact.qr.q))
}

/// Transfers samples f_p on grid x_p to grid x_q through the truncated
/// moment representation: coefficients R^-1 Q^T f_p evaluated at x_q.
/// The result has no shape-parameter dependence.
pub fn mesh_transfer(
    x_p: &[[f64; 3]],
    f_p: &[f64],
    x_q: &[[f64; 3]],
    basis: &MomentBasis,
) -> Result<Vec<f64>> {
    let rank = basis.rank();
    if x_p.len() < rank {
        return Err(Error::InsufficientPoints {
            needed: rank,
            got: x_p.len(),
        });
    }
    if f_p.len() != x_p.len() {
        return Err(Error::Shape(format!(
            "mesh_transfer: {} samples for {} points",
            f_p.len(),
            x_p.len()
        )));
    }
    if !x_p
        .iter()
        .chain(x_q.iter())
        .all(|p| p.iter().all(|c| c.is_finite()))
    {
        return Err(Error::NonFinite {
            what: "mesh_transfer points",
        });
    }
    let lambda_p = basis.vandermonde(x_p);
    let hh = HouseholderQr::factor_pivoted(&lambda_p)?;
    let coeffs = hh.solve_least_squares(f_p)?;
    let lmax = basis.lmax();
    Ok(x_q
        .par_iter()
        .map_init(
            || crate::multiindex::PowerTable::new(lmax),
            |pow, &x| basis.moment_dot(x, pow, &coeffs),
        )
        .collect())
}
