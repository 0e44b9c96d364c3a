use ppm_core::baselines::{
    admm_dual, admm_primal, autotune, max_abs_diff, pgd_dual, pgd_primal, polyhedron_project,
    simplex_project, PolyhedronInstance, SolverConfig, SolverKind,
};
use ppm_core::generate::{feasible_matrix, normal_column, random_tree, seeded};
use ppm_core::oracle::oracle_polyhedron;
use ppm_core::{project, RootedTree};
use rand::Rng;
use rand_distr::StandardNormal;

fn instance(q: usize, rng: &mut impl Rng) -> PolyhedronInstance {
    PolyhedronInstance {
        a: (0..q).map(|_| rng.sample(StandardNormal)).collect(),
        b: rng.sample(StandardNormal),
        n: (0..q).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

#[test]
fn polyhedron_projection_satisfies_kkt_and_matches_oracle() {
    let mut rng = seeded(31);
    for _ in 0..200 {
        let q = rng.random_range(1..=10);
        let inst = instance(q, &mut rng);
        let p = polyhedron_project(&inst);
        for i in 0..q {
            let slack = p.t - p.z[i] - inst.n[i];
            assert!(slack >= -1e-10);
            assert!(p.lambda[i] >= 0.0);
            assert!((p.lambda[i] * slack).abs() <= 1e-10);
            assert!((p.z[i] - (inst.a[i] - p.lambda[i])).abs() <= 1e-12);
        }
        assert!((p.t - inst.b - p.lambda.iter().sum::<f64>()).abs() <= 1e-12);
        let (z, t) = oracle_polyhedron(&inst).unwrap();
        assert!(max_abs_diff(&z, &p.z) <= 1e-8 && (t - p.t).abs() <= 1e-8);
        let again = polyhedron_project(&PolyhedronInstance {
            a: p.z.clone(),
            b: p.t,
            n: inst.n.clone(),
        });
        assert!(max_abs_diff(&again.z, &p.z) <= 1e-12 && (again.t - p.t).abs() <= 1e-12);
    }
}

#[test]
fn simplex_on_large_vectors() {
    let mut rng = seeded(32);
    for n in [1, 10, 1000, 100_000] {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let x = simplex_project(&v);
        assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(x.iter().all(|&a| a >= 0.0));
    }
}

#[test]
fn every_solver_reaches_the_exact_solution() {
    let mut rng = seeded(33);
    for _ in 0..6 {
        let q = rng.random_range(2..=100);
        let tree = random_tree(q, &mut rng);
        let fhat = normal_column(q, &mut rng);
        let exact = project(&tree, &fhat).unwrap().m_star;
        let base = SolverConfig {
            tol: 1e-6,
            max_iters: 500_000,
            record_every: 1000,
            ..SolverConfig::default()
        };
        for kind in SolverKind::ALL {
            let tuned = autotune(kind, &tree, &fhat, &exact, &kind.default_grid(&tree), &base).unwrap();
            assert!(tuned.converged, "{kind} on q = {q}");
            assert!(max_abs_diff(&tuned.solution.m, &exact) <= 1e-6);
        }
    }
}

#[test]
fn default_configs_converge_without_reference() {
    let tree = RootedTree::from_parent_labels(&[0, 1, 1, 2, 2, 3]).unwrap();
    let fhat = [0.9, 0.4, 0.45, 0.3, 0.05, 0.2];
    let exact = project(&tree, &fhat).unwrap().m_star;
    for kind in SolverKind::ALL {
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iters: 1_000_000,
            ..kind.default_config(&tree)
        };
        let s = kind.run(&tree, &fhat, &cfg, None).unwrap();
        assert!(s.trace.converged, "{kind}");
        assert!(max_abs_diff(&s.m, &exact) <= 1e-6, "{kind}: {:e}", max_abs_diff(&s.m, &exact));
        assert!(s.trace.records.iter().all(|r| r.error.is_none()));
    }
}

#[test]
fn feasible_input_has_zero_error_in_the_limit() {
    let mut rng = seeded(34);
    let tree = random_tree(8, &mut rng);
    let (f, ms) = feasible_matrix(&tree, 1, &mut rng);
    let cfg = SolverConfig {
        tol: 1e-9,
        max_iters: 1_000_000,
        ..SolverConfig::default()
    };
    let a = admm_primal(&tree, f.column(0), &cfg, Some(&ms[0])).unwrap();
    assert!(a.trace.converged);
    let d = admm_dual(&tree, f.column(0), &cfg, Some(&ms[0])).unwrap();
    assert!(d.trace.converged);
    let step = SolverKind::PgdPrimal.default_config(&tree).alpha;
    let p = pgd_primal(&tree, f.column(0), &SolverConfig { alpha: step, ..cfg }, Some(&ms[0])).unwrap();
    assert!(p.trace.converged);
    let step = SolverKind::PgdDual.default_config(&tree).alpha;
    let g = pgd_dual(&tree, f.column(0), &SolverConfig { alpha: step, ..cfg }, Some(&ms[0])).unwrap();
    assert!(g.trace.converged);
}
