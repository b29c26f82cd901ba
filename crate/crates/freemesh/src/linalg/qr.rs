//! Economy Householder QR with a prefix rank guard and a non-negative
//! R-diagonal sign convention, so factors are reproducible bit for bit.

use super::{DenseMatrix, RANK_RTOL};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Trailing-column reflector application switches to parallel above this
/// many f64 elements. The threshold depends only on matrix shape, so the
/// serial/parallel decision (and the result) is identical for every thread
/// count.
const PAR_APPLY_MIN: usize = 1 << 16;

/// Explicit thin factors of A = Q R.
#[derive(Debug, Clone)]
pub struct QrFactors {
    /// N x k with orthonormal columns.
    pub q: DenseMatrix,
    /// k x k upper triangular with non-negative diagonal.
    pub r: DenseMatrix,
    /// Length of the leading run of diagonal pivots above the rank guard.
    pub effective_rank: usize,
}

/// Compact Householder factorization.
///
/// Stores the reflectors and R in a column-major working copy so that Q^T
/// can be applied to vectors without ever forming Q. This is the memory-lean
/// path used by the octree fits, where the Vandermonde working copy is the
/// dominant allocation.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    n: usize,
    k: usize,
    /// Column-major: reflector j occupies rows j..n of column j; the strict
    /// upper triangle holds R (with the sign convention already applied).
    a: Vec<f64>,
    /// 2 / v^T v per reflector; 0.0 marks a skipped (zero-column) reflector.
    beta: Vec<f64>,
    /// |R_jj| after the sign flip.
    rdiag: Vec<f64>,
    /// Per-column sign flip that makes the R diagonal non-negative.
    sign: Vec<f64>,
    /// Factored column j holds original column perm[j] (identity when
    /// factored without pivoting).
    perm: Vec<usize>,
    effective_rank: usize,
}

impl HouseholderQr {
    /// Factors an N x k matrix, N >= k >= 1, without pivoting: Q R = A.
    pub fn factor(matrix: &DenseMatrix) -> Result<Self> {
        Self::factor_impl(matrix, false)
    }

    /// Rank-revealing variant with greedy column pivoting: Q R = A P.
    ///
    /// Pivoting orders the R diagonal by decreasing remaining column norm,
    /// which makes the prefix rank guard meaningful for bases whose raw
    /// column ordering interleaves large and tiny columns (the factorial
    /// scaling of high-degree moments shrinks their norms by many orders
    /// of magnitude). [`Self::solve_least_squares`] returns coefficients
    /// in the original column order.
    pub fn factor_pivoted(matrix: &DenseMatrix) -> Result<Self> {
        Self::factor_impl(matrix, true)
    }

    fn factor_impl(matrix: &DenseMatrix, pivot: bool) -> Result<Self> {
        let (n, k) = (matrix.rows(), matrix.cols());
        if k == 0 || n < k {
            return Err(Error::Shape(format!(
                "qr: need rows >= cols >= 1, got {n}x{k}"
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite { what: "qr input" });
        }
        // transpose into column-major working storage
        let mut a = vec![0.0f64; n * k];
        for i in 0..n {
            let row = matrix.row(i);
            for j in 0..k {
                a[j * n + i] = row[j];
            }
        }
        Self::factor_col_major(n, k, a, pivot)
    }

    fn factor_col_major(n: usize, k: usize, mut a: Vec<f64>, pivot: bool) -> Result<Self> {
        let mut beta = vec![0.0f64; k];
        let mut rdiag = vec![0.0f64; k];
        let mut perm: Vec<usize> = (0..k).collect();

        // running squared norms of the remaining (below-step) column parts,
        // downdated after each reflector and recomputed when cancellation
        // makes the running value untrustworthy
        let mut vn1 = vec![0.0f64; k];
        let mut vn2 = vec![0.0f64; k];
        if pivot {
            for j in 0..k {
                let nrm2: f64 = a[j * n..(j + 1) * n].iter().map(|v| v * v).sum();
                vn1[j] = nrm2;
                vn2[j] = nrm2;
            }
        }

        for j in 0..k {
            if pivot {
                // deterministic argmax, ties to the lowest index
                let mut best = j;
                for c in j + 1..k {
                    if vn1[c] > vn1[best] {
                        best = c;
                    }
                }
                if best != j {
                    let (lo, hi) = a.split_at_mut(best * n);
                    lo[j * n..j * n + n].swap_with_slice(&mut hi[..n]);
                    perm.swap(j, best);
                    vn1.swap(j, best);
                    vn2.swap(j, best);
                }
            }

            // reflector for column j from rows j..n
            let (head, tail) = a.split_at_mut((j + 1) * n);
            let col = &mut head[j * n + j..(j + 1) * n];
            let norm2: f64 = col.iter().map(|v| v * v).sum();
            let norm = norm2.sqrt();
            if norm == 0.0 {
                rdiag[j] = 0.0;
                continue;
            }
            let x0 = col[0];
            let alpha = if x0 > 0.0 { -norm } else { norm };
            col[0] = x0 - alpha;
            // v^T v = |x|^2 - 2 alpha x0 + alpha^2; the sign choice makes
            // -2 alpha x0 non-negative, so there is no cancellation.
            let vtv = norm2 - 2.0 * alpha * x0 + alpha * alpha;
            let b = 2.0 / vtv;
            beta[j] = b;
            rdiag[j] = alpha;

            let v = &head[j * n + j..(j + 1) * n];
            let len = n - j;
            let trailing = k - j - 1;
            let apply = |dst: &mut [f64]| {
                let d = &mut dst[j..];
                let mut s = 0.0;
                for (vi, di) in v.iter().zip(d.iter()) {
                    s += vi * di;
                }
                let bs = b * s;
                for (vi, di) in v.iter().zip(d.iter_mut()) {
                    *di -= bs * vi;
                }
            };
            if trailing * len >= PAR_APPLY_MIN {
                tail.par_chunks_mut(n).for_each(apply);
            } else {
                tail.chunks_mut(n).for_each(apply);
            }

            if pivot && j + 1 < k {
                for (c, dst) in tail.chunks_mut(n).enumerate() {
                    let col_ix = j + 1 + c;
                    if vn1[col_ix] == 0.0 {
                        continue;
                    }
                    let r_entry = dst[j];
                    let mut t = 1.0 - r_entry * r_entry / vn1[col_ix];
                    if t < 0.0 {
                        t = 0.0;
                    }
                    let reliability = t * (vn1[col_ix] / vn2[col_ix]);
                    if reliability <= 1e-14 {
                        let nrm2: f64 = dst[j + 1..].iter().map(|v| v * v).sum();
                        vn1[col_ix] = nrm2;
                        vn2[col_ix] = nrm2;
                    } else {
                        vn1[col_ix] *= t;
                    }
                }
            }
        }

        // Sign convention: flip rows of R (and later Q columns) so the
        // diagonal is non-negative.
        let mut sign = vec![1.0f64; k];
        for j in 0..k {
            if rdiag[j] < 0.0 {
                sign[j] = -1.0;
                rdiag[j] = -rdiag[j];
                for c in j + 1..k {
                    a[c * n + j] = -a[c * n + j];
                }
            }
        }

        let r00 = rdiag[0];
        let mut effective_rank = 0;
        while effective_rank < k && rdiag[effective_rank] > RANK_RTOL * r00 {
            effective_rank += 1;
        }

        Ok(Self {
            n,
            k,
            a,
            beta,
            rdiag,
            sign,
            perm,
            effective_rank,
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    /// R entry (i, j), sign convention applied.
    fn r_entry(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.a[j * self.n + i],
            Ordering::Equal => self.rdiag[i],
            Ordering::Greater => 0.0,
        }
    }

    /// Applies Q^T in place to a length-N vector; entries 0..k then hold
    /// Q^T y for the thin Q.
    pub fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n, "apply_qt: vector length");
        for j in 0..self.k {
            let b = self.beta[j];
            if b == 0.0 {
                continue;
            }
            let v = &self.a[j * self.n + j..(j + 1) * self.n];
            let d = &mut y[j..];
            let mut s = 0.0;
            for (vi, di) in v.iter().zip(d.iter()) {
                s += vi * di;
            }
            let bs = b * s;
            for (vi, di) in v.iter().zip(d.iter_mut()) {
                *di -= bs * vi;
            }
        }
        for j in 0..self.k {
            y[j] *= self.sign[j];
        }
    }

    /// Applies Q in place to a length-N vector whose first k entries are
    /// coefficients in the thin-Q column space (the rest must be zero for
    /// a pure column-space product).
    pub fn apply_q(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n, "apply_q: vector length");
        for j in 0..self.k {
            y[j] *= self.sign[j];
        }
        for j in (0..self.k).rev() {
            let b = self.beta[j];
            if b == 0.0 {
                continue;
            }
            let v = &self.a[j * self.n + j..(j + 1) * self.n];
            let d = &mut y[j..];
            let mut s = 0.0;
            for (vi, di) in v.iter().zip(d.iter()) {
                s += vi * di;
            }
            let bs = b * s;
            for (vi, di) in v.iter().zip(d.iter_mut()) {
                *di -= bs * vi;
            }
        }
    }

    /// Back-substitution over the leading effective-rank block; trailing
    /// solution components are zero when the factorization lost rank.
    pub fn solve_upper(&self, qt_y: &[f64]) -> Result<Vec<f64>> {
        assert!(qt_y.len() >= self.k, "solve_upper: rhs length");
        let rank = self.effective_rank;
        let mut x = vec![0.0f64; self.k];
        for i in (0..rank).rev() {
            let mut s = qt_y[i];
            for j in i + 1..rank {
                s -= self.r_entry(i, j) * x[j];
            }
            let pivot = self.rdiag[i];
            if pivot == 0.0 {
                return Err(Error::SingularPivot { index: i });
            }
            x[i] = s / pivot;
        }
        Ok(x)
    }

    /// Least-squares solve min |A x - y|_2 with the rank guard; the
    /// solution comes back in the original column order regardless of
    /// pivoting, with zero coefficients on rejected columns.
    pub fn solve_least_squares(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut work = y.to_vec();
        self.apply_qt(&mut work);
        let x = self.solve_upper(&work)?;
        let mut out = vec![0.0f64; self.k];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = x[j];
        }
        Ok(out)
    }

    /// Explicit k x k upper-triangular R (for a pivoted factorization this
    /// reconstructs A P, not A).
    pub fn r_matrix(&self) -> DenseMatrix {
        let k = self.k;
        let mut r = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                r.set(i, j, self.r_entry(i, j));
            }
        }
        r
    }

    /// Explicit thin Q (N x k). Columns are formed independently (in
    /// parallel) by applying the reflectors to unit vectors.
    pub fn q_thin(&self) -> DenseMatrix {
        let (n, k) = (self.n, self.k);
        let mut cols = vec![0.0f64; n * k];
        cols.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            col[j] = self.sign[j];
            for m in (0..=j.min(k - 1)).rev() {
                let b = self.beta[m];
                if b == 0.0 {
                    continue;
                }
                let v = &self.a[m * n + m..(m + 1) * n];
                let d = &mut col[m..];
                let mut s = 0.0;
                for (vi, di) in v.iter().zip(d.iter()) {
                    s += vi * di;
                }
                let bs = b * s;
                for (vi, di) in v.iter().zip(d.iter_mut()) {
                    *di -= bs * vi;
                }
            }
        });
        // transpose column-major buffer into the row-major DenseMatrix
        let mut q = DenseMatrix::zeros(n, k);
        for j in 0..k {
            for i in 0..n {
                q.set(i, j, cols[j * n + i]);
            }
        }
        q
    }
}

/// Economy QR factorization with explicit factors.
///
/// Fails if the input has fewer rows than columns (callers enforce the
/// points >= rank guard) or contains non-finite values.
pub fn qr_factor(a: &DenseMatrix) -> Result<QrFactors> {
    let hh = HouseholderQr::factor(a)?;
    Ok(QrFactors {
        q: hh.q_thin(),
        r: hh.r_matrix(),
        effective_rank: hh.effective_rank(),
    })
}

/// Solves r x = b by back-substitution over the leading effective-rank
/// block of an upper-triangular r; trailing components of x are zero when
/// the diagonal falls below the rank guard.
pub fn solve_upper_triangular(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let k = r.rows();
    if r.cols() != k {
        return Err(Error::Shape(format!(
            "triangular solve: {}x{}",
            k,
            r.cols()
        )));
    }
    if b.len() != k {
        return Err(Error::Shape(format!(
            "triangular solve: rhs length {} for {k}x{k}",
            b.len()
        )));
    }
    for i in 0..k {
        for j in 0..i {
            if r.get(i, j) != 0.0 {
                return Err(Error::Shape(
                    "triangular solve: matrix is not upper triangular".into(),
                ));
            }
        }
    }
    let r00 = r.get(0, 0).abs();
    let mut rank = 0;
    while rank < k && r.get(rank, rank).abs() > RANK_RTOL * r00 {
        rank += 1;
    }
    let mut x = vec![0.0f64; k];
    for i in (0..rank).rev() {
        let mut s = b[i];
        for j in i + 1..rank {
            s -= r.get(i, j) * x[j];
        }
        let pivot = r.get(i, i);
        if pivot == 0.0 {
            return Err(Error::SingularPivot { index: i });
        }
        x[i] = s / pivot;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::Lcg;

    fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }

    #[test]
    fn qr_identity() {
        let a = DenseMatrix::identity(3);
        let f = qr_factor(&a).unwrap();
        assert_eq!(f.q, DenseMatrix::identity(3));
        assert_eq!(f.r, DenseMatrix::identity(3));
        assert_eq!(f.effective_rank, 3);
    }

    #[test]
    fn qr_pythagorean_column() {
        let a = DenseMatrix::from_rows(&[&[3.0], &[4.0]]);
        let f = qr_factor(&a).unwrap();
        assert!((f.r.get(0, 0) - 5.0).abs() < 1e-15);
        assert!((f.q.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((f.q.get(1, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn qr_random_reconstruction_and_orthogonality() {
        let mut rng = Lcg::new(7);
        let (n, k) = (200, 35);
        let data: Vec<f64> = (0..n * k).map(|_| rng.next_symmetric()).collect();
        let a = DenseMatrix::from_vec(n, k, data);
        let f = qr_factor(&a).unwrap();
        assert_eq!(f.effective_rank, k);

        let qr = f.q.matmul(&f.r).unwrap();
        assert!(max_abs_diff(&qr, &a) <= 1e-12 * a.max_abs().max(1.0));

        let qtq = f.q.transpose().matmul(&f.q).unwrap();
        assert!(max_abs_diff(&qtq, &DenseMatrix::identity(k)) <= 1e-12);

        // diagonal of R non-negative, strictly lower triangle exactly zero
        for i in 0..k {
            assert!(f.r.get(i, i) >= 0.0);
            for j in 0..i {
                assert_eq!(f.r.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_wide_and_nonfinite() {
        assert!(qr_factor(&DenseMatrix::zeros(2, 3)).is_err());
        let mut a = DenseMatrix::zeros(3, 2);
        a.set(0, 0, f64::NAN);
        assert!(qr_factor(&a).is_err());
    }

    #[test]
    fn qr_rank_guard_duplicate_columns() {
        let mut rng = Lcg::new(3);
        let n = 40;
        let mut a = DenseMatrix::zeros(n, 3);
        for i in 0..n {
            let v = rng.next_symmetric();
            a.set(i, 0, v);
            a.set(i, 1, 2.0 * v); // linearly dependent
            a.set(i, 2, rng.next_symmetric());
        }
        let f = qr_factor(&a).unwrap();
        assert_eq!(f.effective_rank, 1);
        // columns of Q beyond the effective rank are still orthonormal
        let qtq = f.q.transpose().matmul(&f.q).unwrap();
        assert!(max_abs_diff(&qtq, &DenseMatrix::identity(3)) <= 1e-12);
    }

    #[test]
    fn least_squares_residual_orthogonal_to_q() {
        let mut rng = Lcg::new(11);
        let (n, k) = (120, 20);
        let data: Vec<f64> = (0..n * k).map(|_| rng.next_symmetric()).collect();
        let a = DenseMatrix::from_vec(n, k, data);
        let f_vec: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();

        let hh = HouseholderQr::factor(&a).unwrap();
        let coeffs = hh.solve_least_squares(&f_vec).unwrap();
        let ax = a.matvec(&coeffs).unwrap();
        let mut resid: Vec<f64> = f_vec.iter().zip(&ax).map(|(f, p)| f - p).collect();
        hh.apply_qt(&mut resid);
        let f_inf = f_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qt_r_inf = resid[..k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(qt_r_inf <= 1e-10 * f_inf);
    }

    #[test]
    fn apply_qt_matches_explicit_q() {
        let mut rng = Lcg::new(19);
        let (n, k) = (50, 12);
        let data: Vec<f64> = (0..n * k).map(|_| rng.next_symmetric()).collect();
        let a = DenseMatrix::from_vec(n, k, data);
        let hh = HouseholderQr::factor(&a).unwrap();
        let q = hh.q_thin();

        let y: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let mut implicit = y.clone();
        hh.apply_qt(&mut implicit);
        let explicit = q.transpose().matvec(&y).unwrap();
        for j in 0..k {
            assert!((implicit[j] - explicit[j]).abs() <= 1e-13);
        }
    }

    #[test]
    fn solve_upper_identity_and_hand_case() {
        let i3 = DenseMatrix::identity(3);
        assert_eq!(
            solve_upper_triangular(&i3, &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let r = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 4.0]]);
        assert_eq!(
            solve_upper_triangular(&r, &[4.0, 8.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn solve_upper_random_residual() {
        let mut rng = Lcg::new(23);
        let k = 30;
        let mut r = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                r.set(i, j, rng.next_symmetric());
            }
            r.set(i, i, 1.0 + rng.next_unit()); // well conditioned diagonal
        }
        let b: Vec<f64> = (0..k).map(|_| rng.next_symmetric()).collect();
        let x = solve_upper_triangular(&r, &b).unwrap();
        let rx = r.matvec(&x).unwrap();
        let b_inf = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            assert!((rx[i] - b[i]).abs() <= 1e-11 * b_inf);
        }
    }

    #[test]
    fn solve_upper_rejects_lower_triangle() {
        let r = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.5, 1.0]]);
        assert!(solve_upper_triangular(&r, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn pivoted_solve_keeps_columns_after_tiny_ones() {
        // column 1 is independent but ~1e-13 in scale; the unpivoted prefix
        // guard cuts the basis there and zeroes column 2, while the pivoted
        // factorization orders it last and keeps the large columns.
        let mut rng = Lcg::new(29);
        let n = 60;
        let mut a = DenseMatrix::zeros(n, 3);
        for i in 0..n {
            a.set(i, 0, rng.next_symmetric());
            a.set(i, 1, 1e-13 * rng.next_symmetric());
            a.set(i, 2, rng.next_symmetric());
        }
        // target uses both large columns
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * a.get(i, 0) - 3.0 * a.get(i, 2))
            .collect();

        let plain = HouseholderQr::factor(&a).unwrap();
        assert_eq!(plain.effective_rank(), 1);
        let c_plain = plain.solve_least_squares(&y).unwrap();
        assert_eq!(c_plain[2], 0.0, "unpivoted guard drops the trailing column");

        let piv = HouseholderQr::factor_pivoted(&a).unwrap();
        assert_eq!(piv.effective_rank(), 2);
        let c = piv.solve_least_squares(&y).unwrap();
        assert!((c[0] - 2.0).abs() <= 1e-10, "{c:?}");
        assert!((c[2] + 3.0).abs() <= 1e-10, "{c:?}");
        assert_eq!(c[1], 0.0, "rejected column keeps a zero coefficient");
    }

    #[test]
    fn pivoted_solve_matches_plain_when_well_conditioned() {
        let mut rng = Lcg::new(37);
        let (n, k) = (80, 9);
        let data: Vec<f64> = (0..n * k).map(|_| rng.next_symmetric()).collect();
        let a = DenseMatrix::from_vec(n, k, data);
        let y: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let c1 = HouseholderQr::factor(&a)
            .unwrap()
            .solve_least_squares(&y)
            .unwrap();
        let c2 = HouseholderQr::factor_pivoted(&a)
            .unwrap()
            .solve_least_squares(&y)
            .unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn qr_deterministic_across_thread_counts() {
        let mut rng = Lcg::new(5);
        let (n, k) = (300, 24);
        let data: Vec<f64> = (0..n * k).map(|_| rng.next_symmetric()).collect();
        let a = DenseMatrix::from_vec(n, k, data);

        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let f1 = pool1.install(|| qr_factor(&a).unwrap());
        let f4 = pool4.install(|| qr_factor(&a).unwrap());
        assert_eq!(f1.q.data(), f4.q.data());
        assert_eq!(f1.r.data(), f4.r.data());
    }
}
