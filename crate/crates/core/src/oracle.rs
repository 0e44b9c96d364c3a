//! Brute-force reference solvers for small trees. They share nothing with
//! the sweep beyond the tree type: both enumerate active sets and solve
//! dense linear systems.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::baselines::PolyhedronInstance;
use crate::error::{check_finite, PpmError, Result};
use crate::tree::{ancestry_matrix, closest_ancestor_matrix, AncestrySums, RootedTree};

/// Largest tree the enumeration accepts.
pub const ORACLE_MAX_NODES: usize = 14;

const FEASIBILITY_TOL: f64 = 1e-12;
const MULTIPLIER_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub m: Vec<f64>,
    pub f: Vec<f64>,
    pub cost: f64,
    /// Indices with `m_i = 0` in the accepted KKT point.
    pub active_set: Vec<usize>,
}

fn check_size(tree: &RootedTree) -> Result<()> {
    if tree.len() > ORACLE_MAX_NODES {
        return Err(PpmError::Refused(format!(
            "oracle enumerates 2^q active sets; q = {} exceeds {ORACLE_MAX_NODES}",
            tree.len()
        )));
    }
    Ok(())
}

/// Minimizes `||fhat - U m||` over the simplex by trying active sets in
/// order of increasing size until one satisfies the KKT conditions.
pub fn oracle_project(tree: &RootedTree, fhat: &[f64]) -> Result<OracleSolution> {
    check_size(tree)?;
    let q = tree.len();
    if fhat.len() != q {
        return Err(PpmError::InvalidInput("column length differs from tree".into()));
    }
    check_finite(fhat, "frequency")?;
    let u = ancestry_matrix(tree).cast::<f64>();
    let fvec = DVector::from_column_slice(fhat);
    let gram = u.transpose() * &u;
    let rhs = u.transpose() * &fvec;

    for size in 0..q {
        for active in (0..q).combinations(size) {
            let mut is_active = vec![false; q];
            for &i in &active {
                is_active[i] = true;
            }
            let free: Vec<usize> = (0..q).filter(|&i| !is_active[i]).collect();
            let k = free.len();
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            let mut b = DVector::zeros(k + 1);
            for (a, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    kkt[(a, c)] = gram[(i, j)];
                }
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
                b[a] = rhs[i];
            }
            b[k] = 1.0;
            let Some(sol) = kkt.lu().solve(&b) else {
                continue;
            };
            if (0..k).any(|a| sol[a] < -FEASIBILITY_TOL) {
                continue;
            }
            let nu = sol[k];
            let mut m = vec![0.0; q];
            for (a, &i) in free.iter().enumerate() {
                m[i] = sol[a];
            }
            let mvec = DVector::from_column_slice(&m);
            let grad = &gram * &mvec - &rhs;
            if active.iter().any(|&i| grad[i] + nu < -MULTIPLIER_TOL) {
                continue;
            }
            let f = &u * &mvec;
            let cost = (&fvec - &f).norm();
            return Ok(OracleSolution {
                m,
                f: f.as_slice().to_vec(),
                cost,
                active_set: active,
            });
        }
    }
    Err(PpmError::Invariant("no active set satisfied the KKT conditions".into()))
}

/// Solves the inner dual at a fixed offset `t` by enumerating which
/// constraints `Z_i <= t - N_i` are tight, keeping the feasible candidate of
/// lowest objective. Returns `Z*(t)` and `L(t)`.
pub fn oracle_dual_at_t(tree: &RootedTree, sums: &AncestrySums, t: f64) -> Result<(Vec<f64>, f64)> {
    check_size(tree)?;
    let q = tree.len();
    let d = DMatrix::<f64>::identity(q, q) - closest_ancestor_matrix(tree).cast::<f64>();
    // objective 1/2 ||D^T Z||^2 with D = I - T
    let hessian = &d * d.transpose();
    let bound: Vec<f64> = (0..q).map(|i| t - sums[i]).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << q) {
        let fixed = |i: usize| mask & (1 << i) != 0;
        let free: Vec<usize> = (0..q).filter(|&i| !fixed(i)).collect();
        let mut z = vec![0.0; q];
        for i in (0..q).filter(|&i| fixed(i)) {
            z[i] = bound[i];
        }
        if !free.is_empty() {
            let k = free.len();
            let mut h = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for (a, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    h[(a, c)] = hessian[(i, j)];
                }
                b[a] = -(0..q).filter(|&j| fixed(j)).map(|j| hessian[(i, j)] * z[j]).sum::<f64>();
            }
            let Some(sol) = h.cholesky().map(|c| c.solve(&b)) else {
                continue;
            };
            for (a, &i) in free.iter().enumerate() {
                z[i] = sol[a];
            }
        }
        if (0..q).any(|i| z[i] > bound[i] + FEASIBILITY_TOL * bound[i].abs().max(1.0)) {
            continue;
        }
        let value = 0.5 * (d.transpose() * DVector::from_column_slice(&z)).norm_squared();
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((z, value));
        }
    }
    best.ok_or_else(|| PpmError::Invariant("no feasible boundary set".into()))
}

/// Projection of `(A, B)` onto `{t 1 - Z >= N}` by enumerating which
/// constraints are tight, smallest sets first, and solving the dense KKT
/// system of each. Returns `(Z, t)`.
pub fn oracle_polyhedron(inst: &PolyhedronInstance) -> Result<(Vec<f64>, f64)> {
    let q = inst.a.len();
    if q > ORACLE_MAX_NODES {
        return Err(PpmError::Refused(format!(
            "oracle enumerates 2^q active sets; q = {q} exceeds {ORACLE_MAX_NODES}"
        )));
    }
    if inst.n.len() != q {
        return Err(PpmError::InvalidInput("A and N differ in length".into()));
    }
    // variables x = (Z, t); constraint i reads Z_i - t <= -N_i
    let n = q + 1;
    for size in 0..=q {
        for active in (0..q).combinations(size) {
            let k = active.len();
            let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
            let mut b = DVector::<f64>::zeros(n + k);
            for i in 0..n {
                kkt[(i, i)] = 1.0;
            }
            for i in 0..q {
                b[i] = inst.a[i];
            }
            b[q] = inst.b;
            for (c, &i) in active.iter().enumerate() {
                kkt[(i, n + c)] = 1.0;
                kkt[(q, n + c)] = -1.0;
                kkt[(n + c, i)] = 1.0;
                kkt[(n + c, q)] = -1.0;
                b[n + c] = -inst.n[i];
            }
            let Some(sol) = kkt.lu().solve(&b) else {
                continue;
            };
            if (0..k).any(|c| sol[n + c] < -MULTIPLIER_TOL) {
                continue;
            }
            let t = sol[q];
            let z: Vec<f64> = (0..q).map(|i| sol[i]).collect();
            let slack_ok = (0..q).all(|i| t - z[i] - inst.n[i] >= -1e-10 * (1.0 + inst.n[i].abs()));
            if slack_ok {
                return Ok((z, t));
            }
        }
    }
    Err(PpmError::Invariant("no active set satisfied the KKT conditions".into()))
}
