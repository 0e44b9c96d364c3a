use super::admm::{dual_objective, primal_start};
use super::polyhedron::{polyhedron_project, PolyhedronInstance};
use super::simplex::simplex_project_into;
use super::{apply_ddt, apply_u, apply_ut, check_column, DualSolution, Monitor, PrimalSolution, SolverConfig};
use crate::error::{PpmError, Result};
use crate::projection::recover_solution;
use crate::tree::{ancestor_sums, RootedTree};

const DIVERGENCE_STREAK: usize = 10;

struct Streak {
    last: f64,
    rising: usize,
}

impl Streak {
    fn new() -> Self {
        Streak {
            last: f64::INFINITY,
            rising: 0,
        }
    }

    fn check(&mut self, objective: f64, step: f64) -> Result<()> {
        if objective > self.last {
            self.rising += 1;
        } else {
            self.rising = 0;
        }
        self.last = objective;
        if self.rising >= DIVERGENCE_STREAK || !objective.is_finite() {
            return Err(PpmError::Diverged(format!(
                "objective rose for {DIVERGENCE_STREAK} consecutive iterations with step {step:e}; use a smaller step"
            )));
        }
        Ok(())
    }
}

/// `m <- simplex(m + alpha U^T (fhat - U m))`.
pub fn pgd_primal(
    tree: &RootedTree,
    fhat: &[f64],
    cfg: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<PrimalSolution> {
    check_column(tree, fhat)?;
    let q = tree.len();
    let mut monitor = Monitor::new(cfg, reference, q)?;
    let alpha = cfg.alpha;
    let mut m = primal_start(tree, fhat);
    let (mut r, mut g, mut step) = (vec![0.0; q], vec![0.0; q], vec![0.0; q]);
    apply_u(tree, &m, &mut r);
    for i in 0..q {
        r[i] = fhat[i] - r[i];
    }
    let mut streak = Streak::new();
    for k in 1..=monitor.max_iters() {
        apply_ut(tree, &r, &mut g);
        for i in 0..q {
            step[i] = m[i] + alpha * g[i];
        }
        simplex_project_into(&step, &mut m);
        apply_u(tree, &m, &mut r);
        let mut objective = 0.0;
        for i in 0..q {
            r[i] = fhat[i] - r[i];
            objective += r[i] * r[i];
        }
        objective *= 0.5;
        streak.check(objective, alpha)?;
        if monitor.observe(k, &m, objective) {
            break;
        }
    }
    Ok(PrimalSolution {
        m,
        trace: monitor.trace,
    })
}

/// Gradient step on `t + 1/2 ||(U^T)^{-1} z||^2` followed by projection onto
/// `t 1 - z >= N`.
pub fn pgd_dual(
    tree: &RootedTree,
    fhat: &[f64],
    cfg: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<DualSolution> {
    check_column(tree, fhat)?;
    let q = tree.len();
    let mut monitor = Monitor::new(cfg, reference, q)?;
    let alpha = cfg.alpha;
    let sums = ancestor_sums(tree, fhat)?.into_inner();
    let mut t = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut inst = PolyhedronInstance {
        a: vec![0.0; q],
        b: 0.0,
        n: sums,
    };
    let mut z = vec![0.0; q];
    let (mut g, mut scratch) = (vec![0.0; q], vec![0.0; q]);
    let mut m = vec![0.0; q];
    let mut streak = Streak::new();
    for k in 1..=monitor.max_iters() {
        apply_ddt(tree, &z, &mut g);
        for i in 0..q {
            inst.a[i] = z[i] - alpha * g[i];
        }
        inst.b = t - alpha;
        let p = polyhedron_project(&inst);
        z = p.z;
        t = p.t;
        let objective = dual_objective(tree, &z, t, &mut scratch);
        streak.check(objective, alpha)?;
        m = recover_solution(tree, &z).0;
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
    use crate::baselines::{lambda_max_ddt, lambda_max_utu, max_abs_diff};

    fn cfg(alpha: f64) -> SolverConfig {
        SolverConfig {
            alpha,
            tol: 1e-10,
            max_iters: 200_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn primal_chain() {
        let tree = RootedTree::chain(2);
        let s = pgd_primal(&tree, &[0.5, 0.7], &cfg(0.99 / lambda_max_utu(&tree)), None).unwrap();
        assert!(s.trace.converged);
        assert!(max_abs_diff(&s.m, &[0.3, 0.7]) < 1e-8);
    }

    #[test]
    fn feasible_start_is_a_fixed_point() {
        let tree = RootedTree::chain(3);
        // m = (0.2, 0.3, 0.5)
        let s = pgd_primal(&tree, &[1.0, 0.8, 0.5], &cfg(0.5), Some(&[0.2, 0.3, 0.5])).unwrap();
        assert_eq!(s.trace.iterations, 1);
    }

    #[test]
    fn dual_chain_and_single_node() {
        let tree = RootedTree::chain(2);
        let s = pgd_dual(&tree, &[0.5, 0.7], &cfg(0.99 / lambda_max_ddt(&tree)), Some(&[0.3, 0.7])).unwrap();
        assert!(s.trace.converged);
        assert!((s.t + 0.5).abs() < 1e-8);
        let s = pgd_dual(&RootedTree::single(), &[0.4], &cfg(0.5), None).unwrap();
        assert!((s.t + 0.6).abs() < 1e-8);
    }

    #[test]
    fn oversized_step_is_reported() {
        let tree = RootedTree::chain(6);
        let step = 3.0 / lambda_max_ddt(&tree);
        let fhat = [0.0, 3.0, -2.0, 5.0, -4.0, 1.0];
        assert!(matches!(pgd_dual(&tree, &fhat, &cfg(step), None), Err(PpmError::Diverged(_))));
    }
}
