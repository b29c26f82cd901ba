//! Recursive octree decomposition of a scattered-data interpolant.
//!
//! Each node least-squares fits the moment basis to the residual left by
//! its ancestors, then splits its points by octant and recurses wherever
//! the octant residual RMS still exceeds the threshold and enough points
//! remain for a full-rank fit. Evaluation accumulates the local
//! polynomials along the root-to-leaf containment path.
//!
//! The build is deterministic for any thread count: sibling octants are
//! fitted on disjoint slices and attached by octant slot, never by
//! completion order.

mod format;

pub use format::{deserialize, serialize};

use crate::error::{Error, Result};
use crate::linalg::HouseholderQr;
use crate::multiindex::{MomentBasis, PowerTable};
use rayon::prelude::*;

/// Hard recursion cap; unreachable for sane inputs (random grids stop far
/// earlier via the point-count guard) but bounds degenerate clusters of
/// coincident points with inconsistent samples.
pub const MAX_DEPTH: usize = 64;

/// Local frame of one node: x_local = (x - center) / half_width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFrame {
    pub center: [f64; 3],
    pub half_width: f64,
}

impl NodeFrame {
    /// Maps a global point into this frame.
    pub fn to_local(&self, x: [f64; 3]) -> [f64; 3] {
        [
            (x[0] - self.center[0]) / self.half_width,
            (x[1] - self.center[1]) / self.half_width,
            (x[2] - self.center[2]) / self.half_width,
        ]
    }

    /// Frame of the child in `octant` (slot 0..8, bit k of the slot giving
    /// the sign of axis k: set = non-negative side).
    pub fn child_frame(&self, octant: usize) -> NodeFrame {
        let s = octant_signs(octant);
        let q = self.half_width / 2.0;
        NodeFrame {
            center: [
                self.center[0] + q * s[0],
                self.center[1] + q * s[1],
                self.center[2] + q * s[2],
            ],
            half_width: q,
        }
    }
}

/// Sign vector of an octant slot: +1 on axes whose bit is set, else -1.
#[inline]
pub fn octant_signs(octant: usize) -> [f64; 3] {
    [
        if octant & 1 != 0 { 1.0 } else { -1.0 },
        if octant & 2 != 0 { 1.0 } else { -1.0 },
        if octant & 4 != 0 { 1.0 } else { -1.0 },
    ]
}

/// Octant slot of a point in local coordinates. Coordinates exactly at
/// zero go to the non-negative side.
#[inline]
pub fn octant_slot(x: [f64; 3]) -> usize {
    (x[0] >= 0.0) as usize | ((x[1] >= 0.0) as usize) << 1 | ((x[2] >= 0.0) as usize) << 2
}

/// One octree node: frame, local residual-polynomial coefficients, and up
/// to eight children indexed by octant slot.
#[derive(Debug, Clone)]
pub struct OctreeNode {
    pub frame: NodeFrame,
    pub coeffs: Vec<f64>,
    pub children: [Option<Box<OctreeNode>>; 8],
    pub point_count: u64,
    /// RMS of this node's residual after its own fit.
    pub residual_rms: f64,
}

impl OctreeNode {
    fn count_nodes(&self) -> u64 {
        1 + self
            .children
            .iter()
            .flatten()
            .map(|c| c.count_nodes())
            .sum::<u64>()
    }

    fn depth_below(&self) -> usize {
        self.children
            .iter()
            .flatten()
            .map(|c| 1 + c.depth_below())
            .max()
            .unwrap_or(0)
    }
}

/// A complete fitted interpolant.
#[derive(Debug, Clone)]
pub struct FmtTree {
    pub basis: MomentBasis,
    pub tau: f64,
    pub root: OctreeNode,
    pub domain_lo: [f64; 3],
    pub domain_hi: [f64; 3],
    pub node_count: u64,
    pub max_depth: usize,
}

/// Per-node fit diagnostics gathered during the build, in preorder.
#[derive(Debug, Clone, Copy)]
pub struct NodeFitDiag {
    pub depth: usize,
    pub point_count: usize,
    /// Max |f| of the node's incoming residual, before its fit.
    pub f_inf: f64,
    /// Max |Q^T r| over the effective-rank columns after the fit.
    pub qt_residual_inf: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub nodes: Vec<NodeFitDiag>,
}

/// Result of a tree fit: the tree, the final residual at every input point
/// (original point order), and per-node diagnostics.
#[derive(Debug, Clone)]
pub struct FmtFit {
    pub tree: FmtTree,
    pub residual: Vec<f64>,
    pub final_residual_rms: f64,
    pub report: FitReport,
}

/// Values of a tree evaluation plus the count of query points that fell
/// outside the root box (still evaluated, by extrapolation).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub extrapolated: u64,
}

/// Least-squares moment fit of one node.
///
/// `f` holds the samples on entry and the residual f - Lambda c on return;
/// the returned coefficients solve min |Lambda c - f|_2 with the rank
/// guard (rank-deficient directions get zero coefficients).
pub fn mesh_to_moments(
    points_local: &[[f64; 3]],
    f: &mut [f64],
    basis: &MomentBasis,
) -> Result<Vec<f64>> {
    let (coeffs, _) = fit_residual(points_local, f, basis)?;
    Ok(coeffs)
}

/// Shared fit path: returns the coefficients and max |Q^T r| over the
/// effective-rank columns of the annihilated residual.
fn fit_residual(
    points_local: &[[f64; 3]],
    f: &mut [f64],
    basis: &MomentBasis,
) -> Result<(Vec<f64>, f64)> {
    let rank = basis.rank();
    let n = points_local.len();
    if n < rank {
        return Err(Error::InsufficientPoints {
            needed: rank,
            got: n,
        });
    }
    if f.len() != n {
        return Err(Error::Shape(format!("{} samples for {n} points", f.len())));
    }
    let lambda = basis.vandermonde(points_local);
    // Pivoting is essential here: the basis ordering interleaves tiny
    // factorial-scaled high-degree columns with large low-degree ones, so
    // an unpivoted prefix rank guard would cut the basis off at the first
    // high-degree column instead of at genuine rank loss.
    let hh = HouseholderQr::factor_pivoted(&lambda)?;
    drop(lambda); // the factorization holds its own working copy
    let coeffs = hh.solve_least_squares(f)?;

    // residual in place, rows recomputed on the fly
    let lmax = basis.lmax();
    f.par_iter_mut().zip(points_local.par_iter()).for_each_init(
        || PowerTable::new(lmax),
        |pow, (fi, &x)| {
            *fi -= basis.moment_dot(x, pow, &coeffs);
        },
    );

    let mut qt_r = f.to_vec();
    hh.apply_qt(&mut qt_r);
    let qt_inf = qt_r[..hh.effective_rank()]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((coeffs, qt_inf))
}

/// Stable in-place reorder so octant blocks are contiguous in slot order;
/// returns the per-octant counts.
pub fn order_by_octant(points: &mut [[f64; 3]], f: &mut [f64]) -> [usize; 8] {
    order_by_octant_with_ids(points, f, None)
}

fn order_by_octant_with_ids(
    points: &mut [[f64; 3]],
    f: &mut [f64],
    ids: Option<&mut [u32]>,
) -> [usize; 8] {
    let n = points.len();
    debug_assert_eq!(f.len(), n);
    let slots: Vec<u8> = points.iter().map(|&p| octant_slot(p) as u8).collect();
    let mut counts = [0usize; 8];
    for &s in &slots {
        counts[s as usize] += 1;
    }
    let mut starts = [0usize; 8];
    for o in 1..8 {
        starts[o] = starts[o - 1] + counts[o - 1];
    }

    let mut cursor = starts;
    let mut perm = vec![0u32; n]; // destination position of each element
    for (i, &s) in slots.iter().enumerate() {
        perm[i] = cursor[s as usize] as u32;
        cursor[s as usize] += 1;
    }

    let mut tmp_p = vec![[0.0f64; 3]; n];
    let mut tmp_f = vec![0.0f64; n];
    for i in 0..n {
        let d = perm[i] as usize;
        tmp_p[d] = points[i];
        tmp_f[d] = f[i];
    }
    points.copy_from_slice(&tmp_p);
    f.copy_from_slice(&tmp_f);
    if let Some(ids) = ids {
        debug_assert_eq!(ids.len(), n);
        let mut tmp_i = vec![0u32; n];
        for i in 0..n {
            tmp_i[perm[i] as usize] = ids[i];
        }
        ids.copy_from_slice(&tmp_i);
    }
    counts
}

struct BuildCtx<'a> {
    basis: &'a MomentBasis,
    tau: f64,
}

fn build_node(
    ctx: &BuildCtx<'_>,
    frame: NodeFrame,
    pts: &mut [[f64; 3]],
    f: &mut [f64],
    ids: &mut [u32],
    depth: usize,
) -> Result<(Box<OctreeNode>, Vec<NodeFitDiag>)> {
    let n = pts.len();
    let rank = ctx.basis.rank();
    let f_inf = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let (coeffs, qt_residual_inf) = fit_residual(pts, f, ctx.basis)?;
    let residual_rms = (f.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();

    let counts = order_by_octant_with_ids(pts, f, Some(ids));

    // carve the octant blocks and decide which ones recurse
    struct ChildTask<'s> {
        slot: usize,
        frame: NodeFrame,
        pts: &'s mut [[f64; 3]],
        f: &'s mut [f64],
        ids: &'s mut [u32],
    }
    let mut tasks: Vec<ChildTask<'_>> = Vec::new();
    {
        let (mut rest_p, mut rest_f, mut rest_i) = (pts, f, ids);
        for (slot, &c) in counts.iter().enumerate() {
            let (blk_p, rp) = rest_p.split_at_mut(c);
            let (blk_f, rf) = rest_f.split_at_mut(c);
            let (blk_i, ri) = rest_i.split_at_mut(c);
            rest_p = rp;
            rest_f = rf;
            rest_i = ri;
            if c == 0 {
                continue;
            }
            let e_rms = (blk_f.iter().map(|r| r * r).sum::<f64>() / c as f64).sqrt();
            if e_rms > ctx.tau && c >= rank && depth < MAX_DEPTH {
                tasks.push(ChildTask {
                    slot,
                    frame: frame.child_frame(slot),
                    pts: blk_p,
                    f: blk_f,
                    ids: blk_i,
                });
            }
        }
    }

    let results: Result<Vec<(usize, Box<OctreeNode>, Vec<NodeFitDiag>)>> = tasks
        .into_par_iter()
        .map(|task| {
            // re-center into the child frame: local' = 2 x - s
            let s = octant_signs(task.slot);
            for p in task.pts.iter_mut() {
                p[0] = 2.0 * p[0] - s[0];
                p[1] = 2.0 * p[1] - s[1];
                p[2] = 2.0 * p[2] - s[2];
            }
            build_node(ctx, task.frame, task.pts, task.f, task.ids, depth + 1)
                .map(|(node, diags)| (task.slot, node, diags))
        })
        .collect();

    let mut children: [Option<Box<OctreeNode>>; 8] = Default::default();
    let mut diags = vec![NodeFitDiag {
        depth,
        point_count: n,
        f_inf,
        qt_residual_inf,
        residual_rms,
    }];
    for (slot, node, child_diags) in results? {
        children[slot] = Some(node);
        diags.extend(child_diags);
    }

    Ok((
        Box::new(OctreeNode {
            frame,
            coeffs,
            children,
            point_count: n as u64,
            residual_rms,
        }),
        diags,
    ))
}

/// Fits the full octree to samples `f` at global `points`.
///
/// The root frame maps the data bounding box isotropically onto the unit
/// cube (center = box midpoint, half width = half the largest side). Per
/// node: fit, split by octant, recurse into octants whose residual RMS
/// exceeds `tau` and which hold at least rank points.
pub fn mesh_to_tree(
    points: &[[f64; 3]],
    f: &[f64],
    basis: &MomentBasis,
    tau: f64,
) -> Result<FmtFit> {
    let n = points.len();
    let rank = basis.rank();
    if f.len() != n {
        return Err(Error::Shape(format!("{} samples for {n} points", f.len())));
    }
    if n < rank {
        return Err(Error::InsufficientPoints {
            needed: rank,
            got: n,
        });
    }
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "threshold tau must be positive and finite, got {tau}"
        )));
    }
    if !points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite { what: "points" });
    }
    if !f.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "samples" });
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "point count {n} exceeds the supported maximum"
        )));
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let center = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let max_side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]);
    let half_width = if max_side > 0.0 { max_side / 2.0 } else { 1.0 };
    let root_frame = NodeFrame { center, half_width };

    let mut pts: Vec<[f64; 3]> = points.iter().map(|&p| root_frame.to_local(p)).collect();
    let mut fw = f.to_vec();
    let mut ids: Vec<u32> = (0..n as u32).collect();

    let ctx = BuildCtx { basis, tau };
    let (root, diags) = build_node(&ctx, root_frame, &mut pts, &mut fw, &mut ids, 0)?;

    let final_residual_rms = (fw.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let mut residual = vec![0.0f64; n];
    for (pos, &id) in ids.iter().enumerate() {
        residual[id as usize] = fw[pos];
    }

    let node_count = root.count_nodes();
    let max_depth = root.depth_below();
    Ok(FmtFit {
        tree: FmtTree {
            basis: basis.clone(),
            tau,
            root: *root,
            domain_lo: lo,
            domain_hi: hi,
            node_count,
            max_depth,
        },
        residual,
        final_residual_rms,
        report: FitReport { nodes: diags },
    })
}

impl FmtTree {
    /// Evaluates the interpolant at the query points by accumulating the
    /// local polynomial of every node on the containment path. Points
    /// outside the root box are evaluated anyway (the octant descent rule
    /// extends past the box) and tallied as extrapolated.
    pub fn evaluate(&self, query: &[[f64; 3]]) -> Evaluation {
        let lmax = self.basis.lmax();
        let per_point: Vec<(f64, bool)> = query
            .par_iter()
            .map_init(
                || PowerTable::new(lmax),
                |pow, &q| {
                    let mut x = self.root.frame.to_local(q);
                    let outside = x.iter().any(|c| c.abs() > 1.0);
                    let mut node = &self.root;
                    let mut acc = 0.0;
                    loop {
                        acc += self.basis.moment_dot(x, pow, &node.coeffs);
                        let slot = octant_slot(x);
                        match &node.children[slot] {
                            Some(child) => {
                                let s = octant_signs(slot);
                                x = [2.0 * x[0] - s[0], 2.0 * x[1] - s[1], 2.0 * x[2] - s[2]];
                                node = child;
                            }
                            None => break,
                        }
                    }
                    (acc, outside)
                },
            )
            .collect();
        let extrapolated = per_point.iter().filter(|(_, o)| *o).count() as u64;
        Evaluation {
            values: per_point.into_iter().map(|(v, _)| v).collect(),
            extrapolated,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serialize(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FmtTree> {
        deserialize(bytes)
    }
}
