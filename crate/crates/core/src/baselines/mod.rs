//! Iterative solvers for the same projection: ADMM and projected gradient
//! descent on the primal (simplex-constrained least squares) and on the dual
//! (offset `t` plus tree-Laplacian energy over a polyhedron).

mod admm;
mod pgd;
pub mod polyhedron;
pub mod simplex;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use admm::{admm_dual, admm_primal};
pub use pgd::{pgd_dual, pgd_primal};
pub use polyhedron::{polyhedron_project, PolyhedronInstance, PolyhedronProjection};
pub use simplex::{simplex_project, simplex_project_sorted};

use crate::error::{check_finite, PpmError, Result};
use crate::tree::RootedTree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// ADMM penalty.
    pub rho: f64,
    /// ADMM dual step, or the PGD step size.
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Keep one trace record every this many iterations (the last iteration
    /// is always kept).
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            alpha: 1.0,
            max_iters: 100_000,
            tol: 1e-6,
            record_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn new(rho: f64, alpha: f64, max_iters: usize, tol: f64) -> Result<Self> {
        let cfg = SolverConfig {
            rho,
            alpha,
            max_iters,
            tol,
            record_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.rho) || !positive(self.alpha) || !positive(self.tol) {
            return Err(PpmError::InvalidInput(format!(
                "rho, alpha and tol must be positive and finite (got {}, {}, {})",
                self.rho, self.alpha, self.tol
            )));
        }
        if self.record_every == 0 {
            return Err(PpmError::InvalidInput("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `max_j |M_j - M*_j|` when a reference was supplied.
    pub error: Option<f64>,
    pub objective: f64,
    /// Seconds since the solver started.
    pub elapsed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Elapsed seconds at the iteration that met the tolerance.
    pub converged_after: Option<f64>,
}

impl ConvergenceTrace {
    /// Elapsed time of the first recorded iteration with error at most `tol`.
    pub fn time_to(&self, tol: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.error.is_some_and(|e| e <= tol))
            .map(|r| r.elapsed)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.error)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| PpmError::InvalidInput(format!("trace export: {e}"));
        w.write_record(["iteration", "error", "objective", "elapsed_sec"]).map_err(io)?;
        for r in &self.records {
            let error = r.error.map_or(String::new(), |e| format!("{e:.6e}"));
            w.write_record([
                r.iteration.to_string(),
                error,
                format!("{:.16e}", r.objective),
                format!("{:.6e}", r.elapsed),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| PpmError::InvalidInput(format!("trace export: {e}")))?;
        Ok(())
    }
}

/// Bookkeeping shared by the four solvers: error against the reference (or
/// successive change when none), record stride, and the stopping rule.
pub(crate) struct Monitor<'a> {
    cfg: SolverConfig,
    reference: Option<&'a [f64]>,
    start: std::time::Instant,
    previous: Vec<f64>,
    pub trace: ConvergenceTrace,
}

impl<'a> Monitor<'a> {
    pub fn new(cfg: &SolverConfig, reference: Option<&'a [f64]>, q: usize) -> Result<Self> {
        cfg.validate()?;
        if let Some(r) = reference {
            if r.len() != q {
                return Err(PpmError::InvalidInput("reference length differs from tree".into()));
            }
        }
        Ok(Monitor {
            cfg: *cfg,
            reference,
            start: std::time::Instant::now(),
            previous: Vec::new(),
            trace: ConvergenceTrace::default(),
        })
    }

    pub fn max_iters(&self) -> usize {
        self.cfg.max_iters
    }

    /// Records iteration `k` (1-based) and reports whether to stop.
    pub fn observe(&mut self, k: usize, m: &[f64], objective: f64) -> bool {
        let error = self.reference.map(|r| max_abs_diff(m, r));
        let measure = match error {
            Some(e) => e,
            None if self.previous.is_empty() => f64::INFINITY,
            None => max_abs_diff(m, &self.previous),
        };
        if self.reference.is_none() {
            self.previous.clear();
            self.previous.extend_from_slice(m);
        }
        let done = measure <= self.cfg.tol;
        let last = done || k == self.cfg.max_iters;
        self.trace.iterations = k;
        if done || last || k % self.cfg.record_every == 0 {
            let elapsed = self.start.elapsed().as_secs_f64();
            self.trace.records.push(TraceRecord {
                iteration: k,
                error,
                objective,
                elapsed,
            });
            if done {
                self.trace.converged = true;
                self.trace.converged_after = Some(elapsed);
            }
        }
        done
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `U m`: subtree sums.
pub fn apply_u(tree: &RootedTree, m: &[f64], out: &mut [f64]) {
    out.copy_from_slice(m);
    for &v in tree.preorder().iter().rev() {
        if let Some(p) = tree.parent(v) {
            out[p] += out[v];
        }
    }
}

/// `U^T r`: sums over ancestors and self.
pub fn apply_ut(tree: &RootedTree, r: &[f64], out: &mut [f64]) {
    for &v in tree.preorder() {
        out[v] = r[v] + tree.parent(v).map_or(0.0, |p| out[p]);
    }
}

/// `(I - T) x`: each entry minus the sum over its children.
pub fn apply_d(tree: &RootedTree, x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    for v in 0..tree.len() {
        if let Some(p) = tree.parent(v) {
            out[p] -= x[v];
        }
    }
}

/// `(I - T)^T z`: each entry minus its parent's.
pub fn apply_dt(tree: &RootedTree, z: &[f64], out: &mut [f64]) {
    for v in 0..tree.len() {
        out[v] = z[v] - tree.parent(v).map_or(0.0, |p| z[p]);
    }
}

/// `(I - T)(I - T)^T z`, which is `(U^T U)^{-1} z`.
pub fn apply_ddt(tree: &RootedTree, z: &[f64], out: &mut [f64]) {
    for v in 0..tree.len() {
        out[v] = (1 + tree.children(v).len()) as f64 * z[v];
    }
    for v in 0..tree.len() {
        if let Some(p) = tree.parent(v) {
            out[v] -= z[p];
            out[p] -= z[v];
        }
    }
}

/// Factor of `s I + c (I - T)(I - T)^T`. The matrix is nonzero only on the
/// diagonal and on tree edges, so eliminating leaves first creates no fill.
#[derive(Clone, Debug)]
pub struct TreeSystem<'a> {
    tree: &'a RootedTree,
    c: f64,
    pivot: Vec<f64>,
}

impl<'a> TreeSystem<'a> {
    pub fn factor(tree: &'a RootedTree, s: f64, c: f64) -> Self {
        let mut pivot: Vec<f64> = (0..tree.len())
            .map(|v| s + c * (1 + tree.children(v).len()) as f64)
            .collect();
        for &v in tree.preorder().iter().rev() {
            if let Some(p) = tree.parent(v) {
                pivot[p] -= c * c / pivot[v];
            }
        }
        TreeSystem { tree, c, pivot }
    }

    /// Overwrites `b` with the solution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let pre = self.tree.preorder();
        for &v in pre.iter().rev() {
            if let Some(p) = self.tree.parent(v) {
                b[p] += self.c * b[v] / self.pivot[v];
            }
        }
        for &v in pre {
            let above = self.tree.parent(v).map_or(0.0, |p| b[p]);
            b[v] = (b[v] + self.c * above) / self.pivot[v];
        }
    }
}

/// Largest eigenvalue of `U^T U` by power iteration.
pub fn lambda_max_utu(tree: &RootedTree) -> f64 {
    power_iteration(tree.len(), |x, out| {
        let mut tmp = vec![0.0; x.len()];
        apply_u(tree, x, &mut tmp);
        apply_ut(tree, &tmp, out);
    })
}

/// Largest eigenvalue of `(I - T)(I - T)^T` by power iteration.
pub fn lambda_max_ddt(tree: &RootedTree) -> f64 {
    power_iteration(tree.len(), |x, out| apply_ddt(tree, x, out))
}

fn power_iteration(n: usize, apply: impl Fn(&[f64], &mut [f64])) -> f64 {
    // positive start vector; both operators have a positive leading
    // eigenvector or at least a non-orthogonal one for generic starts
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
    let mut y = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..1000 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        apply(&x, &mut y);
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut x, &mut y);
        if (next - estimate).abs() <= 1e-9 * next.abs() {
            return next.max(estimate);
        }
        estimate = next;
    }
    estimate
}

pub(crate) fn check_column(tree: &RootedTree, fhat: &[f64]) -> Result<()> {
    if fhat.len() != tree.len() {
        return Err(PpmError::InvalidInput(format!(
            "column has {} entries for a tree with {} nodes",
            fhat.len(),
            tree.len()
        )));
    }
    check_finite(fhat, "frequency")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalSolution {
    pub m: Vec<f64>,
    pub trace: ConvergenceTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub z: Vec<f64>,
    pub t: f64,
    /// Recovered from `z` as in the exact solver.
    pub m: Vec<f64>,
    pub trace: ConvergenceTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    AdmmPrimal,
    AdmmDual,
    PgdPrimal,
    PgdDual,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::AdmmPrimal,
        SolverKind::AdmmDual,
        SolverKind::PgdPrimal,
        SolverKind::PgdDual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::AdmmPrimal => "admm-primal",
            SolverKind::AdmmDual => "admm-dual",
            SolverKind::PgdPrimal => "pgd-primal",
            SolverKind::PgdDual => "pgd-dual",
        }
    }

    pub fn is_pgd(self) -> bool {
        matches!(self, SolverKind::PgdPrimal | SolverKind::PgdDual)
    }

    pub fn run(
        self,
        tree: &RootedTree,
        fhat: &[f64],
        cfg: &SolverConfig,
        reference: Option<&[f64]>,
    ) -> Result<PrimalSolution> {
        match self {
            SolverKind::AdmmPrimal => admm_primal(tree, fhat, cfg, reference),
            SolverKind::PgdPrimal => pgd_primal(tree, fhat, cfg, reference),
            SolverKind::AdmmDual => admm_dual(tree, fhat, cfg, reference).map(DualSolution::into_primal),
            SolverKind::PgdDual => pgd_dual(tree, fhat, cfg, reference).map(DualSolution::into_primal),
        }
    }

    /// Default configuration: `rho = alpha = 1` for ADMM, step `0.99 / L`
    /// for PGD with `L` the estimated Lipschitz constant.
    pub fn default_config(self, tree: &RootedTree) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        match self {
            SolverKind::PgdPrimal => cfg.alpha = 0.99 / lambda_max_utu(tree),
            SolverKind::PgdDual => cfg.alpha = 0.99 / lambda_max_ddt(tree),
            _ => {}
        }
        cfg
    }

    /// Tuning grid: `(rho, alpha)` pairs. PGD steps are multiples of
    /// `1 / L`; ADMM penalties span four decades.
    pub fn default_grid(self, tree: &RootedTree) -> Vec<(f64, f64)> {
        let lipschitz = match self {
            SolverKind::PgdPrimal => lambda_max_utu(tree),
            SolverKind::PgdDual => lambda_max_ddt(tree),
            _ => {
                let rhos = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
                return rhos
                    .iter()
                    .flat_map(|&r| [1.0, 1.6].map(move |a| (r, a)))
                    .collect();
            }
        };
        [0.5, 0.99, 1.5, 1.9]
            .iter()
            .map(|&s| (1.0, s / lipschitz))
            .collect()
    }
}

impl DualSolution {
    fn into_primal(self) -> PrimalSolution {
        PrimalSolution {
            m: self.m,
            trace: self.trace,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = PpmError;
    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PpmError::InvalidInput(format!("unknown solver '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tuned {
    pub config: SolverConfig,
    pub solution: PrimalSolution,
    /// False when no grid point reached the tolerance; the returned point is
    /// then the one with the smallest final error.
    pub converged: bool,
}

/// Runs every grid point against `reference` and keeps the one needing the
/// fewest iterations to reach `base.tol`, the earliest in the grid on ties.
/// Grid points that diverge count as not converged. Once some point has
/// converged, later points are cut off at its iteration count.
pub fn autotune(
    kind: SolverKind,
    tree: &RootedTree,
    fhat: &[f64],
    reference: &[f64],
    grid: &[(f64, f64)],
    base: &SolverConfig,
) -> Result<Tuned> {
    if grid.is_empty() {
        return Err(PpmError::InvalidInput("empty tuning grid".into()));
    }
    let mut best: Option<(Tuned, f64)> = None;
    for &(rho, alpha) in grid {
        let mut cfg = SolverConfig { rho, alpha, ..*base };
        cfg.validate()?;
        // a later point only wins with strictly fewer iterations
        let cap = best
            .as_ref()
            .filter(|(b, _)| b.converged)
            .map(|(b, _)| b.solution.trace.iterations - 1);
        if let Some(cap) = cap {
            if cap == 0 {
                break;
            }
            cfg.max_iters = cfg.max_iters.min(cap);
        }
        let solution = match kind.run(tree, fhat, &cfg, Some(reference)) {
            Ok(s) => s,
            Err(PpmError::Diverged(_)) => continue,
            Err(e) => return Err(e),
        };
        let converged = solution.trace.converged;
        let score = if converged {
            solution.trace.iterations as f64
        } else {
            f64::INFINITY
        };
        let error = solution.trace.final_error().unwrap_or(f64::INFINITY);
        let better = match &best {
            None => true,
            Some((incumbent, incumbent_error)) => {
                if incumbent.converged || converged {
                    let incumbent_score = if incumbent.converged {
                        incumbent.solution.trace.iterations as f64
                    } else {
                        f64::INFINITY
                    };
                    score < incumbent_score
                } else {
                    error < *incumbent_error
                }
            }
        };
        if better {
            best = Some((
                Tuned {
                    config: SolverConfig { rho, alpha, ..*base },
                    solution,
                    converged,
                },
                error,
            ));
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| PpmError::Diverged(format!("every {} grid point diverged", kind.name())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_tree, seeded};
    use crate::tree::ancestry_matrix;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn tree_operators_match_dense_matrices() {
        let mut rng = seeded(11);
        for q in [1, 2, 5, 12] {
            let tree = random_tree(q, &mut rng);
            let u = ancestry_matrix(&tree).cast::<f64>();
            let d = u.clone().try_inverse().unwrap();
            let x: Vec<f64> = (0..q).map(|i| (i as f64 * 0.37).sin()).collect();
            let xv = DVector::from_column_slice(&x);
            let mut out = vec![0.0; q];
            let cases: [(fn(&RootedTree, &[f64], &mut [f64]), DMatrix<f64>); 5] = [
                (apply_u, u.clone()),
                (apply_ut, u.transpose()),
                (apply_d, d.clone()),
                (apply_dt, d.transpose()),
                (apply_ddt, &d * d.transpose()),
            ];
            for (op, dense) in cases {
                op(&tree, &x, &mut out);
                let expect = &dense * &xv;
                assert!(max_abs_diff(&out, expect.as_slice()) < 1e-12);
            }
            for (s, c) in [(1.0, 1.0), (0.3, 2.0), (5.0, 0.1)] {
                let a = DMatrix::identity(q, q) * s + (&d * d.transpose()) * c;
                let sys = TreeSystem::factor(&tree, s, c);
                let mut b = x.clone();
                sys.solve_in_place(&mut b);
                let residual = &a * DVector::from_column_slice(&b) - &xv;
                assert!(residual.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn power_iteration_on_chain() {
        // (I - T)(I - T)^T on a 2-chain is [[2, -1], [-1, 1]]
        let l = lambda_max_ddt(&RootedTree::chain(2));
        assert!((l - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-6);
        let l = lambda_max_utu(&RootedTree::chain(2));
        assert!((l - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1.0, 10, 1e-6).is_err());
        assert!(SolverConfig::new(1.0, -1.0, 10, 1e-6).is_err());
        assert!(SolverConfig::new(1.0, 1.0, 10, f64::NAN).is_err());
        assert!(SolverConfig::new(1.0, 1.0, 10, 1e-6).is_ok());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let tree = RootedTree::chain(2);
        let cfg = SolverConfig {
            max_iters: 5,
            ..SolverConfig::default()
        };
        let s = admm_primal(&tree, &[0.5, 0.7], &cfg, Some(&[0.3, 0.7])).unwrap();
        let mut buf = Vec::new();
        s.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,error,objective,elapsed_sec"));
        assert_eq!(lines.count(), s.trace.records.len());
        let times: Vec<f64> = s.trace.records.iter().map(|r| r.elapsed).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn autotune_picks_fewest_iterations_first_on_ties() {
        let tree = RootedTree::chain(2);
        let fhat = [0.5, 0.7];
        let reference = [0.3, 0.7];
        let base = SolverConfig {
            tol: 1e-8,
            max_iters: 10_000,
            ..SolverConfig::default()
        };
        let single = autotune(SolverKind::AdmmPrimal, &tree, &fhat, &reference, &[(2.0, 1.0)], &base).unwrap();
        assert_eq!((single.config.rho, single.config.alpha), (2.0, 1.0));

        let grid = [(0.1, 1.0), (1.0, 1.0), (1.0, 1.0), (10.0, 1.0)];
        let tuned = autotune(SolverKind::AdmmPrimal, &tree, &fhat, &reference, &grid, &base).unwrap();
        assert!(tuned.converged);
        for &(rho, alpha) in &grid {
            let cfg = SolverConfig { rho, alpha, ..base };
            let run = admm_primal(&tree, &fhat, &cfg, Some(&reference)).unwrap();
            assert!(tuned.solution.trace.iterations <= run.trace.iterations);
        }
        let again = autotune(SolverKind::AdmmPrimal, &tree, &fhat, &reference, &grid, &base).unwrap();
        assert_eq!(again.config, tuned.config);
    }

    #[test]
    fn autotune_without_convergence_is_flagged() {
        let tree = RootedTree::chain(2);
        let base = SolverConfig {
            tol: 1e-15,
            max_iters: 2,
            ..SolverConfig::default()
        };
        let tuned = autotune(
            SolverKind::PgdPrimal,
            &tree,
            &[0.9, 0.1],
            &[0.3, 0.7],
            &[(1.0, 0.1), (1.0, 0.3)],
            &base,
        )
        .unwrap();
        assert!(!tuned.converged);
    }

    #[test]
    fn kinds_parse_by_name() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("newton".parse::<SolverKind>().is_err());
    }
}
