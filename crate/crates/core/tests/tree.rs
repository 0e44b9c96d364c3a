use nalgebra::DMatrix;
use ppm_core::generate::{random_tree, seeded};
use ppm_core::tree::{ancestor_sums, ancestry_matrix, closest_ancestor_matrix};
use ppm_core::{count_trees, decode_prufer, encode_prufer, PruferCode};
use rand::Rng;

#[test]
fn ancestry_inverts_identity_minus_parent_matrix() {
    let mut rng = seeded(21);
    for _ in 0..100 {
        let q = rng.random_range(1..=16);
        let tree = random_tree(q, &mut rng);
        let u = ancestry_matrix(&tree);
        let d = DMatrix::<i64>::identity(q, q) - closest_ancestor_matrix(&tree);
        assert_eq!(&u * &d, DMatrix::<i64>::identity(q, q));
        // unit upper triangular in preorder
        for (a, &v) in tree.preorder().iter().enumerate() {
            assert_eq!(u[(v, v)], 1);
            for &w in &tree.preorder()[..a] {
                assert_eq!(u[(v, w)], 0);
            }
        }
    }
}

#[test]
fn random_codes_round_trip_up_to_16() {
    let mut rng = seeded(22);
    for _ in 0..2000 {
        let q = rng.random_range(3..=16);
        let code = PruferCode((0..q - 2).map(|_| rng.random_range(1..=q)).collect());
        let tree = decode_prufer(&code, q).unwrap();
        assert_eq!(tree.len(), q);
        assert_eq!(encode_prufer(&tree), code);
        assert_eq!(decode_prufer(&encode_prufer(&tree), q).unwrap(), tree);
    }
}

#[test]
fn index_order_is_lexicographic() {
    let q = 6;
    let codes: Vec<PruferCode> = (0..count_trees(q).unwrap()).map(|i| PruferCode::from_index(i, q)).collect();
    assert!(codes.windows(2).all(|w| w[0] < w[1]));
    for (i, c) in codes.iter().enumerate() {
        assert_eq!(c.index(q), i as u64);
    }
}

#[test]
fn sums_follow_parent_recurrence() {
    let mut rng = seeded(23);
    for _ in 0..50 {
        let q = rng.random_range(1..=30);
        let tree = random_tree(q, &mut rng);
        let f: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = ancestor_sums(&tree, &f).unwrap();
        assert_eq!(n[0], f[0]);
        for v in 1..q {
            let p = tree.parent(v).unwrap();
            assert!((n[v] - n[p] - f[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn cayley_counts() {
    assert_eq!(count_trees(10).unwrap(), 100_000_000);
    assert_eq!(count_trees(11).unwrap(), 2_357_947_691);
    assert_eq!(count_trees(2).unwrap(), 1);
    assert_eq!(count_trees(1).unwrap(), 1);
    assert!(count_trees(40).is_err());
}
