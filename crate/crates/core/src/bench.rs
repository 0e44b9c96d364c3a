//! Timing harness: Galton–Watson trees with standard normal columns, the
//! exact solver against autotuned iterative solvers, time to a target error.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{autotune, max_abs_diff, SolverConfig, SolverKind};
use crate::error::{PpmError, Result};
use crate::generate::{normal_column, seeded, GaltonWatsonSpec, RNG_NAME};
use crate::oracle::oracle_project;
use crate::projection::{project, project_incremental};

pub const CSV_HEADER: &str = "size,solver,trial,seed,time_sec,error,converged";

/// Largest size at which exact-solver errors are measured against the
/// brute-force oracle rather than the plain sweep.
pub const ORACLE_CHECK_MAX_Q: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchSolver {
    Exact,
    Iterative(SolverKind),
}

impl fmt::Display for BenchSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchSolver::Exact => f.write_str("exact"),
            BenchSolver::Iterative(k) => f.write_str(k.name()),
        }
    }
}

impl FromStr for BenchSolver {
    type Err = PpmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BenchSolver::Exact),
            other => other.parse().map(BenchSolver::Iterative),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub solvers: Vec<BenchSolver>,
    /// Trials per size; a single entry applies to every size.
    pub trials: Vec<usize>,
    pub seed: u64,
    pub cmin: usize,
    pub cmax: usize,
    /// Error on `M` that counts as reached.
    pub target: f64,
    pub max_iters: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100, 1000],
            solvers: vec![BenchSolver::Exact],
            trials: vec![10],
            seed: 0,
            cmin: 1,
            cmax: 4,
            target: 1e-3,
            max_iters: 100_000,
        }
    }
}

impl BenchConfig {
    fn trials_for(&self, i: usize) -> usize {
        if self.trials.len() == 1 {
            self.trials[0]
        } else {
            self.trials[i]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(PpmError::InvalidInput("sizes must be a non-empty list of positive counts".into()));
        }
        if self.trials.len() != 1 && self.trials.len() != self.sizes.len() {
            return Err(PpmError::InvalidInput(
                "give either one trial count or one per size".into(),
            ));
        }
        if self.solvers.is_empty() {
            return Err(PpmError::InvalidInput("no solvers selected".into()));
        }
        GaltonWatsonSpec::new(1, self.cmin, self.cmax, 0)?;
        if !(self.target.is_finite() && self.target > 0.0) {
            return Err(PpmError::InvalidInput("target error must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub solver: String,
    pub trial: usize,
    pub seed: u64,
    /// Exact solver: wall time. Iterative: time until the error first met
    /// the target, or total time when it never did.
    pub time_sec: f64,
    pub error: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub size: usize,
    pub solver: String,
    pub trials: usize,
    pub mean_time_sec: f64,
    pub median_time_sec: f64,
    pub converged: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rng: String,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SizeSummary>,
}

/// Seed of trial `trial` at size `size`, mixed so nearby inputs give
/// unrelated streams.
pub fn instance_seed(seed: u64, size: usize, trial: usize) -> u64 {
    let mut x = seed ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64).rotate_left(32);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn run_trial(cfg: &BenchConfig, solver: BenchSolver, size: usize, trial: usize) -> Result<BenchRow> {
    let seed = instance_seed(cfg.seed, size, trial);
    let tree = GaltonWatsonSpec::new(size, cfg.cmin, cfg.cmax, seed)?.generate();
    let fhat = normal_column(size, &mut seeded(seed.wrapping_add(1)));
    let (time_sec, error, converged) = match solver {
        BenchSolver::Exact => {
            let start = Instant::now();
            let r = project_incremental(&tree, &fhat)?;
            let time = start.elapsed().as_secs_f64();
            let reference = if size <= ORACLE_CHECK_MAX_Q {
                oracle_project(&tree, &fhat)?.m
            } else {
                project(&tree, &fhat)?.m_star
            };
            (time, max_abs_diff(&r.m_star, &reference), true)
        }
        BenchSolver::Iterative(kind) => {
            let reference = project(&tree, &fhat)?.m_star;
            let base = SolverConfig {
                tol: cfg.target,
                max_iters: cfg.max_iters,
                record_every: cfg.max_iters.max(1),
                ..SolverConfig::default()
            };
            let tuned = autotune(kind, &tree, &fhat, &reference, &kind.default_grid(&tree), &base)?;
            let trace = &tuned.solution.trace;
            let time = trace
                .converged_after
                .or_else(|| trace.records.last().map(|r| r.elapsed))
                .unwrap_or(0.0);
            (time, trace.final_error().unwrap_or(f64::INFINITY), tuned.converged)
        }
    };
    Ok(BenchRow {
        size,
        solver: solver.to_string(),
        trial,
        seed,
        time_sec,
        error,
        converged,
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, &size) in cfg.sizes.iter().enumerate() {
        for &solver in &cfg.solvers {
            let first = rows.len();
            for trial in 0..cfg.trials_for(i) {
                rows.push(run_trial(cfg, solver, size, trial)?);
            }
            let block: &[BenchRow] = &rows[first..];
            let mut times: Vec<f64> = block.iter().map(|r| r.time_sec).collect();
            summary.push(SizeSummary {
                size,
                solver: solver.to_string(),
                trials: block.len(),
                mean_time_sec: times.iter().sum::<f64>() / block.len().max(1) as f64,
                median_time_sec: median(&mut times),
                converged: block.iter().filter(|r| r.converged).count(),
                max_error: block.iter().map(|r| r.error).fold(0.0, f64::max),
            });
        }
    }
    Ok(BenchReport {
        rng: RNG_NAME.into(),
        seed: cfg.seed,
        rows,
        summary,
    })
}

/// Rows without timing noise: everything except `time_sec` is reproducible.
pub fn write_csv<W: Write>(report: &BenchReport, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| PpmError::InvalidInput(format!("writing benchmark csv: {e}"));
    writeln!(out, "# rng {} seed {}", report.rng, report.seed).map_err(io)?;
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{}",
            r.size, r.solver, r.trial, r.seed, r.time_sec, r.error, r.converged
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rows_match_oracle_and_repeat() {
        let cfg = BenchConfig {
            sizes: vec![10],
            trials: vec![3],
            seed: 5,
            ..BenchConfig::default()
        };
        let a = run_bench(&cfg).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().all(|r| r.error <= 1e-9 && r.converged));
        let b = run_bench(&cfg).unwrap();
        let strip = |r: &BenchReport| r.rows.iter().map(|x| (x.seed, x.error.to_bits())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let mut buf = Vec::new();
        write_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some(CSV_HEADER));
    }

    #[test]
    fn iterative_rows_reach_target() {
        let cfg = BenchConfig {
            sizes: vec![20],
            trials: vec![2],
            solvers: vec![BenchSolver::Iterative(SolverKind::PgdPrimal)],
            ..BenchConfig::default()
        };
        let r = run_bench(&cfg).unwrap();
        assert!(r.rows.iter().all(|x| x.converged && x.error <= 1e-3));
        assert_eq!(r.summary[0].converged, 2);
    }

    #[test]
    fn helpers() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.2))).collect();
        assert!((loglog_slope(&pts) - 1.2).abs() < 1e-12);
        assert_ne!(instance_seed(0, 10, 0), instance_seed(0, 10, 1));
        assert!("exact".parse::<BenchSolver>().is_ok());
        assert!(BenchConfig { trials: vec![1, 2], ..BenchConfig::default() }.validate().is_ok());
        assert!(BenchConfig { trials: vec![1, 2, 3], ..BenchConfig::default() }.validate().is_err());
    }
}
