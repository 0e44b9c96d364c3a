//! Exact projection of a frequency column onto the perfect phylogeny
//! polytope of a fixed tree.
//!
//! The projection is solved through its dual: an outer scalar `t` and an
//! inner tree problem `L(t) = min 1/2 sum_i (Z_i - Z_parent(i))^2` subject to
//! `Z_i <= t - N_i`, where `N` holds ancestor-and-self sums of the input.
//! The inner minimizer is piecewise linear in `t`, so sweeping `t` downward
//! through the critical values where a new constraint becomes tight visits
//! at most `q` segments. The sweep stops on the segment where `L'(t) = -1`.

mod incremental;
pub mod rates;

use serde::Serialize;

pub use incremental::project_incremental;
pub use rates::{compute_rates, segment_lines, star_solve, Line, PruneLog, Rates, SubtreeProblem};

use crate::error::{PpmError, Result};
use crate::matrix::FrequencyMatrix;
use crate::tree::{ancestor_sums, AncestrySums, RootedTree};

/// Relative tolerance for grouping simultaneous critical values.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Free nodes whose rate is this close to 1 run parallel to their
/// constraint and never become fixed.
pub const UNIT_RATE_TOLERANCE: f64 = 1e-12;
/// Smallest acceptable `L''` when solving for the optimal offset.
pub const LSECOND_GUARD: f64 = 1e-14;

pub(crate) fn tie_tolerance(t: f64) -> f64 {
    TIE_TOLERANCE * t.abs().max(1.0)
}

/// Sweep state at critical value `t`; rates are one-sided derivatives
/// taken from below.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathState {
    pub index: usize,
    pub t: f64,
    pub boundary: Vec<bool>,
    pub z: Vec<f64>,
    pub z_rate: Vec<f64>,
    pub lprime: f64,
    pub lsecond: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SweepStats {
    /// Segments visited, one rate computation each.
    pub iterations: usize,
    /// Node-neighbour terms touched while computing rates.
    pub rate_work: usize,
}

/// Projection of one sample column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub t_star: f64,
    pub z_star: Vec<f64>,
    pub m_star: Vec<f64>,
    pub f_star: Vec<f64>,
    /// Euclidean distance between the input column and `f_star`.
    pub cost: f64,
    #[serde(skip)]
    pub stats: SweepStats,
}

/// Projection of every column of a matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixProjection {
    pub columns: Vec<ProjectionResult>,
    /// Frobenius distance, `sqrt(sum_s cost_s^2)`.
    pub total_cost: f64,
}

/// `F_i = Z_parent(i) - Z_i` and `M_i = F_i - sum_{c child of i} F_c`.
pub fn recover_solution(tree: &RootedTree, z_star: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q = tree.len();
    let f: Vec<f64> = (0..q)
        .map(|i| tree.parent(i).map_or(0.0, |p| z_star[p]) - z_star[i])
        .collect();
    let m = (0..q)
        .map(|i| f[i] - tree.children(i).iter().map(|&c| f[c]).sum::<f64>())
        .collect();
    (m, f)
}

/// Next critical value below `state.t` and every node reaching its
/// constraint there (within the tie tolerance). `None` when no free node
/// can still meet its constraint.
pub fn next_critical(state: &PathState, sums: &AncestrySums) -> Option<(f64, Vec<usize>)> {
    let candidate = |r: usize| -> Option<f64> {
        if state.boundary[r] {
            return None;
        }
        let rate = state.z_rate[r];
        if (1.0 - rate).abs() < UNIT_RATE_TOLERANCE {
            return None;
        }
        let p = (sums[r] + state.z[r] - state.t * rate) / (1.0 - rate);
        (p < state.t).then_some(p)
    };
    let best = (0..state.z.len())
        .filter_map(candidate)
        .max_by(f64::total_cmp)?;
    let cut = best - tie_tolerance(best);
    let fixed = (0..state.z.len())
        .filter(|&r| candidate(r).is_some_and(|p| p >= cut))
        .collect();
    Some((best, fixed))
}

fn finalize(
    tree: &RootedTree,
    fhat: &[f64],
    t: f64,
    lprime: f64,
    lsecond: f64,
    z_at: impl Fn(f64) -> Vec<f64>,
    stats: SweepStats,
) -> Result<ProjectionResult> {
    if !(lsecond >= LSECOND_GUARD) {
        return Err(PpmError::Degenerate(format!(
            "L'' = {lsecond:e} at t = {t} leaves the optimal offset undetermined"
        )));
    }
    let t_star = t - (1.0 + lprime) / lsecond;
    let z_star = z_at(t_star);
    let (m_star, f_star) = recover_solution(tree, &z_star);
    let cost = fhat
        .iter()
        .zip(&f_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(ProjectionResult {
        t_star,
        z_star,
        m_star,
        f_star,
        cost,
        stats,
    })
}

fn sweep(
    tree: &RootedTree,
    fhat: &[f64],
    mut observe: impl FnMut(&PathState),
) -> Result<ProjectionResult> {
    let sums = ancestor_sums(tree, fhat)?;
    let q = tree.len();
    let t1 = sums.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = t1 - tie_tolerance(t1);
    let boundary: Vec<bool> = sums.values().iter().map(|&n| n >= cut).collect();
    let z = (0..q)
        .map(|j| if boundary[j] { t1 - sums[j] } else { 0.0 })
        .collect();
    let mut state = PathState {
        index: 1,
        t: t1,
        boundary,
        z,
        z_rate: vec![0.0; q],
        lprime: 0.0,
        lsecond: 0.0,
    };
    let mut stats = SweepStats::default();
    loop {
        let rates = compute_rates(tree, &state.boundary)?;
        stats.iterations += 1;
        stats.rate_work += rates.work;
        state.z_rate = rates.z_rate;
        state.lsecond = rates.lsecond;
        observe(&state);
        if stats.iterations > q {
            return Err(PpmError::Invariant(format!(
                "sweep exceeded {q} segments"
            )));
        }
        let Some((t_next, newly_fixed)) = next_critical(&state, &sums) else {
            break;
        };
        let dt = t_next - state.t;
        let lprime_next = state.lprime + dt * state.lsecond;
        if lprime_next < -1.0 {
            break;
        }
        for (z, rate) in state.z.iter_mut().zip(&state.z_rate) {
            *z += dt * rate;
        }
        state.t = t_next;
        state.lprime = lprime_next;
        state.index += 1;
        for j in newly_fixed {
            state.boundary[j] = true;
            state.z[j] = t_next - sums[j];
        }
    }
    let PathState {
        t,
        lprime,
        lsecond,
        ref z,
        ref z_rate,
        ..
    } = state;
    finalize(
        tree,
        fhat,
        t,
        lprime,
        lsecond,
        |ts| z.iter().zip(z_rate).map(|(z, r)| z + (ts - t) * r).collect(),
        stats,
    )
}

/// Projects one frequency column onto the tree's PPM polytope.
pub fn project(tree: &RootedTree, fhat: &[f64]) -> Result<ProjectionResult> {
    sweep(tree, fhat, |_| {})
}

/// Like [`project`], also returning the state at every critical value.
pub fn project_traced(tree: &RootedTree, fhat: &[f64]) -> Result<(ProjectionResult, Vec<PathState>)> {
    let mut path = Vec::new();
    let result = sweep(tree, fhat, |s| path.push(s.clone()))?;
    Ok((result, path))
}

fn check_rows(tree: &RootedTree, fhat: &FrequencyMatrix) -> Result<()> {
    if fhat.rows() != tree.len() {
        return Err(PpmError::InvalidInput(format!(
            "matrix has {} rows for a tree with {} nodes",
            fhat.rows(),
            tree.len()
        )));
    }
    Ok(())
}

/// Projects each column independently.
pub fn project_matrix(tree: &RootedTree, fhat: &FrequencyMatrix) -> Result<MatrixProjection> {
    check_rows(tree, fhat)?;
    let columns = fhat
        .columns()
        .map(|c| project(tree, c))
        .collect::<Result<Vec<_>>>()?;
    let total_cost = columns.iter().map(|r| r.cost * r.cost).sum::<f64>().sqrt();
    Ok(MatrixProjection { columns, total_cost })
}

/// [`project_matrix`] using [`project_incremental`] per column.
pub fn project_matrix_incremental(tree: &RootedTree, fhat: &FrequencyMatrix) -> Result<MatrixProjection> {
    check_rows(tree, fhat)?;
    let columns = fhat
        .columns()
        .map(|c| project_incremental(tree, c))
        .collect::<Result<Vec<_>>>()?;
    let total_cost = columns.iter().map(|r| r.cost * r.cost).sum::<f64>().sqrt();
    Ok(MatrixProjection { columns, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn chain_hand_trace() {
        let tree = RootedTree::chain(2);
        let (r, path) = project_traced(&tree, &[0.5, 0.7]).unwrap();
        assert_eq!(path.len(), 2);
        assert_close(path[0].t, 1.2, 1e-15);
        assert_eq!(path[0].boundary, vec![false, true]);
        assert_eq!(path[0].z_rate, vec![0.5, 1.0]);
        assert_close(path[0].lsecond, 0.5, 1e-15);
        assert_close(path[1].t, -0.2, 1e-12);
        assert_close(path[1].lprime, -0.7, 1e-12);
        assert_eq!(path[1].boundary, vec![true, true]);
        assert_close(path[1].lsecond, 1.0, 1e-15);
        assert_close(r.t_star, -0.5, 1e-12);
        assert_close(r.z_star[0], -1.0, 1e-12);
        assert_close(r.z_star[1], -1.7, 1e-12);
        assert_close(r.f_star[0], 1.0, 1e-12);
        assert_close(r.f_star[1], 0.7, 1e-12);
        assert_close(r.m_star[0], 0.3, 1e-12);
        assert_close(r.m_star[1], 0.7, 1e-12);
        assert_close(r.cost, 0.5, 1e-12);
    }

    #[test]
    fn chain_first_candidate() {
        let tree = RootedTree::chain(2);
        let sums = ancestor_sums(&tree, &[0.5, 0.7]).unwrap();
        let state = PathState {
            index: 1,
            t: 1.2,
            boundary: vec![false, true],
            z: vec![0.0, 0.0],
            z_rate: vec![0.5, 1.0],
            lprime: 0.0,
            lsecond: 0.5,
        };
        let (t, fixed) = next_critical(&state, &sums).unwrap();
        assert_close(t, -0.2, 1e-12);
        assert_eq!(fixed, vec![0]);
    }

    #[test]
    fn unit_rates_have_no_candidate() {
        let tree = RootedTree::chain(3);
        let sums = ancestor_sums(&tree, &[0.1, 0.2, 0.3]).unwrap();
        let state = PathState {
            index: 1,
            t: 0.6,
            boundary: vec![true, false, false],
            z: vec![0.0; 3],
            z_rate: vec![1.0; 3],
            lprime: 0.0,
            lsecond: 1.0,
        };
        assert!(next_critical(&state, &sums).is_none());
    }

    #[test]
    fn symmetric_leaves_fix_together() {
        let tree = RootedTree::star(3);
        let (_, path) = project_traced(&tree, &[0.2, 0.4, 0.4]).unwrap();
        assert_eq!(path[0].boundary, vec![false, true, true]);
    }

    #[test]
    fn single_node() {
        let r = project(&RootedTree::single(), &[0.4]).unwrap();
        assert_close(r.t_star, -0.6, 1e-15);
        assert_eq!(r.m_star, vec![1.0]);
        assert_eq!(r.f_star, vec![1.0]);
        assert_close(r.cost, 0.6, 1e-15);
    }

    #[test]
    fn feasible_column_is_a_fixed_point() {
        let tree = RootedTree::from_parent_labels(&[0, 1, 1, 2, 2, 3]).unwrap();
        let m = [0.1, 0.2, 0.05, 0.3, 0.15, 0.2];
        let u = crate::tree::ancestry_matrix(&tree).cast::<f64>();
        let f = &u * nalgebra::DVector::from_column_slice(&m);
        let r = project(&tree, f.as_slice()).unwrap();
        assert!(r.cost < 1e-12);
        for (a, b) in r.m_star.iter().zip(m) {
            assert_close(*a, b, 1e-12);
        }
    }

    #[test]
    fn recovery_of_zero_and_chain() {
        let tree = RootedTree::chain(2);
        let (m, f) = recover_solution(&tree, &[-1.0, -1.7]);
        assert_close(f[0], 1.0, 1e-15);
        assert_close(f[1], 0.7, 1e-15);
        assert_close(m[0], 0.3, 1e-15);
        assert_close(m[1], 0.7, 1e-15);
        let (m, f) = recover_solution(&tree, &[0.0, 0.0]);
        assert_eq!((m, f), (vec![0.0, 0.0], vec![0.0, 0.0]));
    }

    #[test]
    fn matrix_columns_are_independent() {
        let tree = RootedTree::chain(2);
        let fhat = FrequencyMatrix::from_columns(vec![vec![0.5, 0.7], vec![0.5, 0.7]]).unwrap();
        let r = project_matrix(&tree, &fhat).unwrap();
        assert_eq!(r.columns[0], r.columns[1]);
        assert_close(r.total_cost, 0.5 * 2f64.sqrt(), 1e-12);
        let single = FrequencyMatrix::column_vector(vec![0.5, 0.7]).unwrap();
        assert_close(project_matrix(&tree, &single).unwrap().total_cost, 0.5, 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let tree = RootedTree::chain(2);
        assert!(matches!(project(&tree, &[0.5, f64::INFINITY]), Err(PpmError::InvalidInput(_))));
        assert!(project(&tree, &[0.5]).is_err());
    }
}
