//! Versioned binary tree format, little-endian throughout.
//!
//! Header: magic "FMT1", lmax u32, rank u32, tau f64, domain_lo 3xf64,
//! domain_hi 3xf64, node_count u64. Then node records in preorder:
//! center 3xf64, half_width f64, child_mask u8 (bit o set iff child in
//! octant slot o is present), point_count u64, residual_rms f64,
//! coeffs rank x f64. Children follow their parent in slot order.

use super::{FmtTree, NodeFrame, OctreeNode, MAX_DEPTH};
use crate::error::{Error, Result};
use crate::multiindex::{rank_stride, MomentBasis, MAX_LMAX};

pub const MAGIC: &[u8; 4] = b"FMT1";

/// Serializes a tree to its canonical byte representation. The encoding is
/// a pure function of the tree, so equal trees produce equal bytes.
pub fn serialize(tree: &FmtTree) -> Vec<u8> {
    let rank = tree.basis.rank();
    let node_bytes = 3 * 8 + 8 + 1 + 8 + 8 + rank * 8;
    let mut out =
        Vec::with_capacity(4 + 4 + 4 + 8 + 48 + 8 + tree.node_count as usize * node_bytes);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tree.basis.lmax() as u32).to_le_bytes());
    out.extend_from_slice(&(rank as u32).to_le_bytes());
    out.extend_from_slice(&tree.tau.to_le_bytes());
    for d in 0..3 {
        out.extend_from_slice(&tree.domain_lo[d].to_le_bytes());
    }
    for d in 0..3 {
        out.extend_from_slice(&tree.domain_hi[d].to_le_bytes());
    }
    out.extend_from_slice(&tree.node_count.to_le_bytes());
    write_node(&mut out, &tree.root);
    out
}

fn write_node(out: &mut Vec<u8>, node: &OctreeNode) {
    for d in 0..3 {
        out.extend_from_slice(&node.frame.center[d].to_le_bytes());
    }
    out.extend_from_slice(&node.frame.half_width.to_le_bytes());
    let mut mask = 0u8;
    for (slot, child) in node.children.iter().enumerate() {
        if child.is_some() {
            mask |= 1 << slot;
        }
    }
    out.push(mask);
    out.extend_from_slice(&node.point_count.to_le_bytes());
    out.extend_from_slice(&node.residual_rms.to_le_bytes());
    for c in &node.coeffs {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for child in node.children.iter().flatten() {
        write_node(out, child);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::TreeFormat {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "unexpected end of data (need {n} bytes, {} remain)",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finite_f64(&mut self, what: &str) -> Result<f64> {
        let pos = self.pos;
        let v = self.f64()?;
        if !v.is_finite() {
            return Err(Error::TreeFormat {
                pos,
                msg: format!("non-finite {what}: {v}"),
            });
        }
        Ok(v)
    }
}

/// Parses a tree, validating structure as it goes; errors carry the byte
/// offset of the offending field.
pub fn deserialize(bytes: &[u8]) -> Result<FmtTree> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        if &magic[..3] == b"FMT" {
            return Err(Error::VersionMismatch {
                found: String::from_utf8_lossy(magic).into_owned(),
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
            });
        }
        return Err(Error::TreeFormat {
            pos: 0,
            msg: format!("bad magic {magic:?}"),
        });
    }
    let lmax = cur.u32()? as usize;
    if lmax > MAX_LMAX {
        return Err(cur.err(format!("lmax {lmax} above supported maximum {MAX_LMAX}")));
    }
    let rank = cur.u32()? as usize;
    if rank != rank_stride(lmax + 1) {
        return Err(cur.err(format!(
            "rank {rank} inconsistent with lmax {lmax} (expected {})",
            rank_stride(lmax + 1)
        )));
    }
    let tau = cur.finite_f64("tau")?;
    if tau <= 0.0 {
        return Err(cur.err(format!("non-positive tau {tau}")));
    }
    let mut domain_lo = [0.0; 3];
    let mut domain_hi = [0.0; 3];
    for d in &mut domain_lo {
        *d = cur.finite_f64("domain_lo")?;
    }
    for d in &mut domain_hi {
        *d = cur.finite_f64("domain_hi")?;
    }
    let node_count = cur.u64()?;
    if node_count == 0 {
        return Err(cur.err("node_count must be at least 1"));
    }

    let mut remaining = node_count;
    let root = read_node(&mut cur, rank, 0, &mut remaining)?;
    if remaining != 0 {
        return Err(cur.err(format!(
            "{remaining} declared nodes missing from the stream"
        )));
    }
    if cur.pos != bytes.len() {
        return Err(cur.err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }

    let basis = MomentBasis::new(lmax)?;
    let max_depth = root.depth_below();
    Ok(FmtTree {
        basis,
        tau,
        root,
        domain_lo,
        domain_hi,
        node_count,
        max_depth,
    })
}

fn read_node(
    cur: &mut Cursor<'_>,
    rank: usize,
    depth: usize,
    remaining: &mut u64,
) -> Result<OctreeNode> {
    if depth > MAX_DEPTH {
        return Err(cur.err(format!("tree deeper than the {MAX_DEPTH}-level cap")));
    }
    if *remaining == 0 {
        return Err(cur.err("more nodes in the stream than the header declared"));
    }
    *remaining -= 1;

    let mut center = [0.0; 3];
    for c in &mut center {
        *c = cur.finite_f64("node center")?;
    }
    let hw_pos = cur.pos;
    let half_width = cur.finite_f64("half_width")?;
    if half_width <= 0.0 {
        return Err(Error::TreeFormat {
            pos: hw_pos,
            msg: format!("non-positive half_width {half_width}"),
        });
    }
    let mask = cur.u8()?;
    let point_count = cur.u64()?;
    let residual_rms = cur.finite_f64("residual_rms")?;
    let mut coeffs = Vec::with_capacity(rank);
    for _ in 0..rank {
        coeffs.push(cur.finite_f64("coefficient")?);
    }
    let mut children: [Option<Box<OctreeNode>>; 8] = Default::default();
    for (slot, child) in children.iter_mut().enumerate() {
        if mask & (1 << slot) != 0 {
            *child = Some(Box::new(read_node(cur, rank, depth + 1, remaining)?));
        }
    }
    Ok(OctreeNode {
        frame: NodeFrame { center, half_width },
        coeffs,
        children,
        point_count,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmt::mesh_to_tree;
    use crate::test_util::Lcg;

    fn sample_tree(lmax: usize, tau: f64) -> FmtTree {
        let mut rng = Lcg::new(64);
        let basis = MomentBasis::new(lmax).unwrap();
        let pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.next_unit(), rng.next_unit(), rng.next_unit()])
            .collect();
        let f: Vec<f64> = pts
            .iter()
            .map(|&p| (8.0 * p[0]).sin() * (3.0 * p[1]).cos() + p[2] * p[2])
            .collect();
        mesh_to_tree(&pts, &f, &basis, tau).unwrap().tree
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let tree = sample_tree(2, 1e-4);
        assert!(tree.node_count > 1, "want a multi-node tree");
        let bytes = serialize(&tree);
        let back = deserialize(&bytes).unwrap();
        assert_eq!(serialize(&back), bytes);
        assert_eq!(back.node_count, tree.node_count);
        assert_eq!(back.max_depth, tree.max_depth);
    }

    #[test]
    fn round_trip_preserves_evaluation_bits() {
        let tree = sample_tree(3, 1e-3);
        let back = deserialize(&serialize(&tree)).unwrap();
        let mut rng = Lcg::new(5);
        let queries: Vec<[f64; 3]> = (0..64)
            .map(|_| [rng.next_unit(), rng.next_unit(), rng.next_unit()])
            .collect();
        let a = tree.evaluate(&queries);
        let b = back.evaluate(&queries);
        assert_eq!(a.values, b.values);
        assert_eq!(a.extrapolated, b.extrapolated);
    }

    #[test]
    fn single_node_record_layout() {
        let mut rng = Lcg::new(1);
        let basis = MomentBasis::new(0).unwrap();
        let pts: Vec<[f64; 3]> = (0..10)
            .map(|_| [rng.next_unit(), rng.next_unit(), rng.next_unit()])
            .collect();
        let f = vec![2.5; 10];
        let tree = mesh_to_tree(&pts, &f, &basis, 1e-6).unwrap().tree;
        assert_eq!(tree.node_count, 1);
        let bytes = serialize(&tree);
        // header 76 bytes + one node record with exactly 1 coefficient
        let header = 4 + 4 + 4 + 8 + 6 * 8 + 8;
        let node = 3 * 8 + 8 + 1 + 8 + 8 + 8;
        assert_eq!(bytes.len(), header + node);
    }

    #[test]
    fn rejects_bad_magic_and_versions() {
        let tree = sample_tree(0, 1e-2);
        let mut bytes = serialize(&tree);
        bytes[3] = b'2';
        assert!(matches!(
            deserialize(&bytes),
            Err(Error::VersionMismatch { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(deserialize(&bytes), Err(Error::TreeFormat { .. })));
    }

    #[test]
    fn rejects_truncated_and_trailing_data() {
        let tree = sample_tree(1, 1e-3);
        let bytes = serialize(&tree);
        let err = deserialize(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::TreeFormat { .. }), "{err}");

        let mut padded = bytes.clone();
        padded.push(0);
        assert!(matches!(
            deserialize(&padded),
            Err(Error::TreeFormat { .. })
        ));
    }

    #[test]
    fn rejects_node_count_mismatch() {
        let tree = sample_tree(1, 1e-3);
        let mut bytes = serialize(&tree);
        // header node_count lives after 4+4+4+8+48 = 68 bytes
        let off = 68;
        let declared = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        bytes[off..off + 8].copy_from_slice(&(declared + 1).to_le_bytes());
        assert!(matches!(deserialize(&bytes), Err(Error::TreeFormat { .. })));
    }

    #[test]
    fn rejects_rank_lmax_mismatch() {
        let tree = sample_tree(1, 1e-3);
        let mut bytes = serialize(&tree);
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes()); // rank field
        assert!(matches!(deserialize(&bytes), Err(Error::TreeFormat { .. })));
    }
}
