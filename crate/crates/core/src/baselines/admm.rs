use super::polyhedron::{polyhedron_project, PolyhedronInstance};
use super::simplex::simplex_project_into;
use super::{
    apply_d, apply_ddt, apply_dt, apply_u, check_column, DualSolution, Monitor, PrimalSolution,
    SolverConfig, TreeSystem,
};
use crate::error::Result;
use crate::projection::recover_solution;
use crate::tree::{ancestor_sums, RootedTree};

pub(super) fn primal_objective(tree: &RootedTree, fhat: &[f64], m: &[f64], scratch: &mut [f64]) -> f64 {
    apply_u(tree, m, scratch);
    0.5 * fhat.iter().zip(scratch.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

pub(super) fn dual_objective(tree: &RootedTree, z: &[f64], t: f64, scratch: &mut [f64]) -> f64 {
    apply_dt(tree, z, scratch);
    t + 0.5 * scratch.iter().map(|x| x * x).sum::<f64>()
}

/// Starting point shared by the primal solvers: the simplex projection of
/// `U^{-1} fhat`.
pub(super) fn primal_start(tree: &RootedTree, fhat: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; fhat.len()];
    apply_d(tree, fhat, &mut x);
    let mut m = vec![0.0; x.len()];
    simplex_project_into(&x, &mut m);
    m
}

/// Consensus ADMM on `1/2 ||fhat - U m||^2 + indicator(simplex)`.
///
/// The first proximal map needs `(rho I + U^T U)^{-1}`; since
/// `U^T U = ((I - T)(I - T)^T)^{-1}` it equals
/// `(I + rho (I - T)(I - T)^T)^{-1} (I - T)(I - T)^T`, a tree-structured solve.
pub fn admm_primal(
    tree: &RootedTree,
    fhat: &[f64],
    cfg: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<PrimalSolution> {
    check_column(tree, fhat)?;
    let q = tree.len();
    let mut monitor = Monitor::new(cfg, reference, q)?;
    let (rho, alpha) = (cfg.rho, cfg.alpha);
    let system = TreeSystem::factor(tree, 1.0, rho);
    let mut utf = vec![0.0; q];
    super::apply_ut(tree, fhat, &mut utf);

    let mut m = primal_start(tree, fhat);
    let (mut u1, mut u2) = (vec![0.0; q], vec![0.0; q]);
    let (mut m1, mut m2) = (vec![0.0; q], vec![0.0; q]);
    let (mut b, mut scratch) = (vec![0.0; q], vec![0.0; q]);
    for k in 1..=monitor.max_iters() {
        for i in 0..q {
            b[i] = rho * (m[i] - u1[i]) + utf[i];
        }
        apply_ddt(tree, &b, &mut m1);
        system.solve_in_place(&mut m1);
        for i in 0..q {
            b[i] = m[i] - u2[i];
        }
        simplex_project_into(&b, &mut m2);
        for i in 0..q {
            m[i] = 0.5 * (m1[i] + u1[i] + m2[i] + u2[i]);
            u1[i] += alpha * (m1[i] - m[i]);
            u2[i] += alpha * (m2[i] - m[i]);
        }
        let objective = primal_objective(tree, fhat, &m, &mut scratch);
        if monitor.observe(k, &m, objective) {
            break;
        }
    }
    Ok(PrimalSolution {
        m,
        trace: monitor.trace,
    })
}

/// Three-way consensus ADMM on the dual: the offset term, the Laplacian
/// energy `1/2 ||(U^T)^{-1} z||^2`, and the indicator of `t 1 - z >= N`.
pub fn admm_dual(
    tree: &RootedTree,
    fhat: &[f64],
    cfg: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<DualSolution> {
    check_column(tree, fhat)?;
    let q = tree.len();
    let mut monitor = Monitor::new(cfg, reference, q)?;
    let (rho, alpha) = (cfg.rho, cfg.alpha);
    let sums = ancestor_sums(tree, fhat)?.into_inner();
    let system = TreeSystem::factor(tree, rho, 1.0);

    let mut z = vec![0.0; q];
    let mut t = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut uz, mut ugz) = (vec![0.0; q], vec![0.0; q]);
    let (mut ut, mut ugt) = (0.0, 0.0);
    let mut xz = vec![0.0; q];
    let mut inst = PolyhedronInstance {
        a: vec![0.0; q],
        b: 0.0,
        n: sums,
    };
    let mut scratch = vec![0.0; q];
    let mut m = vec![0.0; q];
    for k in 1..=monitor.max_iters() {
        for i in 0..q {
            xz[i] = rho * (z[i] - uz[i]);
        }
        system.solve_in_place(&mut xz);
        let xt = t - ut - 1.0 / rho;
        for i in 0..q {
            inst.a[i] = z[i] - ugz[i];
        }
        inst.b = t - ugt;
        let g = polyhedron_project(&inst);
        for i in 0..q {
            z[i] = 0.5 * (xz[i] + uz[i] + g.z[i] + ugz[i]);
            uz[i] += alpha * (xz[i] - z[i]);
            ugz[i] += alpha * (g.z[i] - z[i]);
        }
        t = 0.5 * (xt + ut + g.t + ugt);
        ut += alpha * (xt - t);
        ugt += alpha * (g.t - t);

        m = recover_solution(tree, &z).0;
        let objective = dual_objective(tree, &z, t, &mut scratch);
        if monitor.observe(k, &m, objective) {
            break;
        }
    }
    Ok(DualSolution {
        z,
        t,
        m,
        trace: monitor.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::max_abs_diff;
    use crate::generate::{feasible_matrix, seeded};
    use nalgebra::{DMatrix, DVector};

    fn tight() -> SolverConfig {
        SolverConfig {
            tol: 1e-10,
            max_iters: 200_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn primal_chain() {
        let s = admm_primal(&RootedTree::chain(2), &[0.5, 0.7], &tight(), None).unwrap();
        assert!(s.trace.converged);
        assert!(max_abs_diff(&s.m, &[0.3, 0.7]) < 1e-8);
    }

    #[test]
    fn dual_chain_and_single_node() {
        let s = admm_dual(&RootedTree::chain(2), &[0.5, 0.7], &tight(), Some(&[0.3, 0.7])).unwrap();
        assert!(s.trace.converged);
        assert!((s.t + 0.5).abs() < 1e-8);
        let s = admm_dual(&RootedTree::single(), &[0.4], &tight(), None).unwrap();
        assert!((s.t + 0.6).abs() < 1e-8);
        assert!((s.m[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn feasible_input_is_reached() {
        let tree = RootedTree::from_parent_labels(&[0, 1, 1, 2, 2]).unwrap();
        let (f, ms) = feasible_matrix(&tree, 1, &mut seeded(4));
        let s = admm_primal(&tree, f.column(0), &tight(), Some(&ms[0])).unwrap();
        assert!(s.trace.converged);
        let mut scratch = vec![0.0; 5];
        assert!(primal_objective(&tree, f.column(0), &s.m, &mut scratch) < 1e-12);
    }

    #[test]
    fn primal_prox_solves_normal_equations() {
        let tree = RootedTree::from_parent_labels(&[0, 1, 1, 3, 3, 3, 6]).unwrap();
        let q = tree.len();
        let rho = 0.7;
        let u = crate::tree::ancestry_matrix(&tree).cast::<f64>();
        let b: Vec<f64> = (0..q).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; q];
        apply_ddt(&tree, &b, &mut x);
        TreeSystem::factor(&tree, 1.0, rho).solve_in_place(&mut x);
        let lhs = (DMatrix::identity(q, q) * rho + u.transpose() * &u) * DVector::from_column_slice(&x);
        assert!((lhs - DVector::from_column_slice(&b)).amax() < 1e-10);
    }
}
