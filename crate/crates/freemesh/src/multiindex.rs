//! Three-dimensional multi-index bookkeeping and the Vandermonde basis of
//! geometric moments x1^l x2^m x3^n / (l! m! n!).
//!
//! The column ordering of the basis is part of the serialization contract:
//! indices are enumerated with `l` outermost, then `m`, then `n`, so the
//! position of (l, m, n) in [`MomentBasis::indices`] *is* its column index.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use rayon::prelude::*;

/// Largest supported truncation order (rank 2925). Larger orders are
/// rejected when the basis is configured; factorial tables and QR
/// workspaces stay comfortably inside double precision and memory budgets.
pub const MAX_LMAX: usize = 24;

/// Number of 3-D multi-indices of total degree < i: i(i+1)(i+2)/6.
pub fn rank_stride(i: usize) -> usize {
    i * (i + 1) * (i + 2) / 6
}

/// Monomial exponents for the three coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

impl MultiIndex {
    pub fn total_degree(&self) -> usize {
        self.l + self.m + self.n
    }
}

/// Degree-ordered multi-index set of total degree <= lmax, with the
/// reciprocal factorials 1/(l! m! n!) precomputed per column.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    lmax: usize,
    rank: usize,
    indices: Vec<MultiIndex>,
    inv_factorials: Vec<f64>,
}

impl MomentBasis {
    /// Builds the basis for total degree <= `lmax`.
    ///
    /// Enumeration order is the triple loop with `l` outermost, `m` middle,
    /// `n` innermost; every (l, m, n) with l+m+n <= lmax appears exactly once
    /// and its list position is its column index.
    pub fn new(lmax: usize) -> Result<Self> {
        if lmax > MAX_LMAX {
            return Err(Error::UnsupportedOrder {
                lmax,
                max: MAX_LMAX,
            });
        }
        let rank = rank_stride(lmax + 1);
        let mut factorial = vec![1.0f64; lmax + 1];
        for i in 1..=lmax {
            factorial[i] = factorial[i - 1] * i as f64;
        }
        let mut indices = Vec::with_capacity(rank);
        let mut inv_factorials = Vec::with_capacity(rank);
        for l in 0..=lmax {
            for m in 0..=lmax - l {
                for n in 0..=lmax - l - m {
                    indices.push(MultiIndex { l, m, n });
                    inv_factorials.push(1.0 / (factorial[l] * factorial[m] * factorial[n]));
                }
            }
        }
        debug_assert_eq!(indices.len(), rank);
        Ok(Self {
            lmax,
            rank,
            indices,
            inv_factorials,
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Basis size: rank_stride(lmax + 1).
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn inv_factorials(&self) -> &[f64] {
        &self.inv_factorials
    }

    /// Column index of (l, m, n) under the enumeration order.
    pub fn column(&self, l: usize, m: usize, n: usize) -> Option<usize> {
        if l + m + n > self.lmax {
            return None;
        }
        self.indices
            .iter()
            .position(|ix| ix.l == l && ix.m == m && ix.n == n)
    }

    /// Writes the geometric-moment row for one point into `out`.
    ///
    /// Monomials come from per-coordinate power tables built by repeated
    /// multiplication, so no `powi` is evaluated per entry.
    pub fn moment_row_into(&self, x: [f64; 3], pow: &mut PowerTable, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rank);
        pow.fill(x);
        for (col, (ix, inv_f)) in self.indices.iter().zip(&self.inv_factorials).enumerate() {
            out[col] = pow.p1[ix.l] * pow.p2[ix.m] * pow.p3[ix.n] * inv_f;
        }
    }

    /// Geometric-moment row for one point.
    pub fn moment_row(&self, x: [f64; 3]) -> Vec<f64> {
        let mut pow = PowerTable::new(self.lmax);
        let mut out = vec![0.0; self.rank];
        self.moment_row_into(x, &mut pow, &mut out);
        out
    }

    /// Dot product of the moment row at `x` with `coeffs`, without forming
    /// the row. This is the evaluation hot path.
    pub fn moment_dot(&self, x: [f64; 3], pow: &mut PowerTable, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.rank);
        pow.fill(x);
        let mut acc = 0.0;
        for (col, (ix, inv_f)) in self.indices.iter().zip(&self.inv_factorials).enumerate() {
            acc += pow.p1[ix.l] * pow.p2[ix.m] * pow.p3[ix.n] * inv_f * coeffs[col];
        }
        acc
    }

    /// Vandermonde matrix of geometric moments: row i is the moment row of
    /// `points[i]`. Rows are assembled in parallel; each row is computed
    /// serially so the result is identical to serial assembly.
    pub fn vandermonde(&self, points: &[[f64; 3]]) -> DenseMatrix {
        let rank = self.rank;
        let mut data = vec![0.0f64; points.len() * rank];
        data.par_chunks_mut(rank)
            .zip(points.par_iter())
            .for_each_init(
                || PowerTable::new(self.lmax),
                |pow, (row, &x)| self.moment_row_into(x, pow, row),
            );
        DenseMatrix::from_vec(points.len(), rank, data)
    }
}

/// Reusable per-coordinate monomial power tables x^0..x^lmax.
#[derive(Debug, Clone)]
pub struct PowerTable {
    p1: Vec<f64>,
    p2: Vec<f64>,
    p3: Vec<f64>,
}

impl PowerTable {
    pub fn new(lmax: usize) -> Self {
        Self {
            p1: vec![1.0; lmax + 1],
            p2: vec![1.0; lmax + 1],
            p3: vec![1.0; lmax + 1],
        }
    }

    fn fill(&mut self, x: [f64; 3]) {
        for k in 1..self.p1.len() {
            self.p1[k] = self.p1[k - 1] * x[0];
            self.p2[k] = self.p2[k - 1] * x[1];
            self.p3[k] = self.p3[k - 1] * x[2];
        }
    }
}
