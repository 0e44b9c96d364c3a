//! Projection of `(A, B)` onto the polyhedron `{(Z, t) : t 1 - Z >= N}`.
//!
//! The dual in the multipliers `lambda >= 0` has Hessian `I + 1 1^T`, so the
//! active multipliers share one offset: after sorting `R = A + N - B 1`,
//! the active set is a suffix of the sorted order.

use std::cell::Cell;

#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedronInstance {
    pub a: Vec<f64>,
    pub b: f64,
    pub n: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedronProjection {
    pub z: Vec<f64>,
    pub t: f64,
    pub lambda: Vec<f64>,
    /// Comparisons spent sorting.
    pub comparisons: usize,
}

pub fn polyhedron_project(inst: &PolyhedronInstance) -> PolyhedronProjection {
    let q = inst.a.len();
    let r: Vec<f64> = (0..q).map(|i| inst.a[i] + inst.n[i] - inst.b).collect();
    let mut order: Vec<usize> = (0..q).collect();
    let comparisons = Cell::new(0usize);
    order.sort_unstable_by(|&i, &j| {
        comparisons.set(comparisons.get() + 1);
        r[i].total_cmp(&r[j])
    });

    // scan sorted positions from the top; suffix [start, q) is active
    let mut suffix = 0.0;
    let mut offset = 0.0;
    let mut start = q;
    for pos in (0..q).rev() {
        let candidate_sum = suffix + r[order[pos]];
        let active = (q - pos) as f64;
        let candidate_offset = candidate_sum / (active + 1.0);
        if r[order[pos]] - candidate_offset < 0.0 {
            break;
        }
        suffix = candidate_sum;
        offset = candidate_offset;
        start = pos;
    }
    let mut lambda = vec![0.0; q];
    for &i in &order[start..] {
        lambda[i] = r[i] - offset;
    }
    let total: f64 = lambda.iter().sum();
    let z = (0..q).map(|i| inst.a[i] - lambda[i]).collect();
    PolyhedronProjection {
        z,
        t: inst.b + total,
        lambda,
        comparisons: comparisons.get(),
    }
}
