//! Property tests for the structural invariants.

use freemesh::bench::error_metrics;
use freemesh::fmt::{deserialize, mesh_to_tree, octant_slot, order_by_octant, serialize};
use freemesh::kernel::{gaussian_rbf, ShapeParameter};
use freemesh::multiindex::{rank_stride, MomentBasis};
use proptest::prelude::*;

fn fact(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Naive power by sequential multiplication (the oracle convention; powi
/// uses repeated squaring and rounds differently).
fn naive_pow(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * x)
}

fn ulp_diff(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

proptest! {
    #[test]
    fn rank_stride_counts_degree_shells(i in 0usize..60) {
        // the i-th shell holds one index per (l, m) pair with l + m <= i
        prop_assert_eq!(
            rank_stride(i + 1) - rank_stride(i),
            (i + 1) * (i + 2) / 2
        );
    }

    #[test]
    fn moment_rows_match_naive_evaluation(
        x in prop::array::uniform3(-1.0f64..=1.0),
        lmax in 0usize..=20,
    ) {
        let basis = MomentBasis::new(lmax).unwrap();
        let row = basis.moment_row(x);
        for (col, ix) in basis.indices().iter().enumerate() {
            let naive = naive_pow(x[0], ix.l) * naive_pow(x[1], ix.m)
                * naive_pow(x[2], ix.n)
                / (fact(ix.l) * fact(ix.m) * fact(ix.n));
            if naive == 0.0 {
                prop_assert_eq!(row[col], 0.0);
            } else {
                prop_assert!(ulp_diff(row[col], naive) <= 4);
            }
            prop_assert!(row[col].abs() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn octant_ordering_partitions_stably(
        data in prop::collection::vec((prop::array::uniform3(-1.0f64..=1.0), -10.0f64..10.0), 1..120)
    ) {
        let mut pts: Vec<[f64; 3]> = data.iter().map(|(p, _)| *p).collect();
        let mut f: Vec<f64> = data.iter().map(|(_, v)| *v).collect();
        let counts = order_by_octant(&mut pts, &mut f);

        prop_assert_eq!(counts.iter().sum::<usize>(), pts.len());
        // blocks are contiguous and correctly labelled
        let mut start = 0;
        for (slot, &c) in counts.iter().enumerate() {
            for i in start..start + c {
                prop_assert_eq!(octant_slot(pts[i]), slot);
            }
            start += c;
        }
        // stable: original relative order preserved within each octant
        let mut expected: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 8];
        for (i, (p, v)) in data.iter().enumerate() {
            expected[octant_slot(*p)].push((i, *v));
        }
        let mut start = 0;
        for (slot, &c) in counts.iter().enumerate() {
            let got: Vec<f64> = f[start..start + c].to_vec();
            let want: Vec<f64> = expected[slot].iter().map(|(_, v)| *v).collect();
            prop_assert_eq!(got, want);
            start += c;
        }
    }

    #[test]
    fn error_metrics_ordering(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..64)
    ) {
        let predicted: Vec<f64> = pairs.iter().map(|(a, _)| *a).collect();
        let truth: Vec<f64> = pairs.iter().map(|(_, b)| *b).collect();
        let (e_rms, e_inf) = error_metrics(&predicted, &truth);
        prop_assert!(e_rms >= 0.0 && e_inf >= 0.0);
        prop_assert!(e_rms <= e_inf + 1e-15);
    }

    #[test]
    fn gaussian_rbf_range_and_symmetry(
        a in prop::array::uniform3(-2.0f64..=2.0),
        b in prop::array::uniform3(-2.0f64..=2.0),
        eps in 0.01f64..1.5,
    ) {
        // domain kept clear of exp underflow so the open lower bound holds
        let s = ShapeParameter::new(eps).unwrap();
        let v = gaussian_rbf(a, b, s);
        prop_assert!(v > 0.0 && v <= 1.0);
        prop_assert_eq!(v.to_bits(), gaussian_rbf(b, a, s).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_bytes_round_trip(
        seed in 0u64..1000,
        lmax in 0usize..=2,
        tau_exp in 1i32..6,
    ) {
        let n = 600;
        let pts = freemesh::bench::random_grid(n, seed, freemesh::bench::BoundingBox::unit());
        let f: Vec<f64> = pts
            .iter()
            .map(|p| (10.0 * p[0]).sin() * (4.0 * p[1]).cos() + p[2])
            .collect();
        let basis = MomentBasis::new(lmax).unwrap();
        let tree = mesh_to_tree(&pts, &f, &basis, 10f64.powi(-tau_exp)).unwrap().tree;
        let bytes = serialize(&tree);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(serialize(&back), bytes);
    }
}
