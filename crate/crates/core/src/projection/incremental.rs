//! The sweep with incremental bookkeeping: only subtrees touched by newly
//! fixed nodes are re-solved, candidate critical values live in a max-heap
//! with lazy invalidation, and `L''` is patched term by term.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::rates::{component_tops, solve_component, Line};
use super::{finalize, tie_tolerance, ProjectionResult, SweepStats, UNIT_RATE_TOLERANCE};
use crate::error::Result;
use crate::tree::{ancestor_sums, AncestrySums, RootedTree};

#[derive(Clone, Copy, Debug)]
struct Candidate {
    t: f64,
    node: usize,
    version: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct Sweep<'a> {
    tree: &'a RootedTree,
    sums: AncestrySums,
    boundary: Vec<bool>,
    lines: Vec<Line>,
    terms: Vec<f64>,
    version: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    heap: BinaryHeap<Candidate>,
    t: f64,
    lprime: f64,
    lsecond: f64,
    stats: SweepStats,
}

impl Sweep<'_> {
    fn term(&self, j: usize) -> f64 {
        let above = self.tree.parent(j).map_or(0.0, |p| self.lines[p].slope);
        let d = self.lines[j].slope - above;
        d * d
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch += 1;
        self.epoch
    }

    fn push_candidate(&mut self, r: usize) {
        let line = self.lines[r];
        if (1.0 - line.slope).abs() < UNIT_RATE_TOLERANCE {
            return;
        }
        let t = (line.intercept + self.sums[r]) / (1.0 - line.slope);
        if t < self.t {
            self.heap.push(Candidate {
                t,
                node: r,
                version: self.version[r],
            });
        }
    }

    fn is_live(&self, c: &Candidate) -> bool {
        !self.boundary[c.node] && self.version[c.node] == c.version
    }

    /// Pops the largest live candidate and every live candidate tied with it.
    fn pop_critical(&mut self) -> Option<(f64, Vec<usize>)> {
        let best = loop {
            let c = self.heap.pop()?;
            if self.is_live(&c) {
                break c;
            }
        };
        let cut = best.t - tie_tolerance(best.t);
        let mut fixed = vec![best.node];
        while let Some(c) = self.heap.peek().copied() {
            if c.t < cut {
                break;
            }
            self.heap.pop();
            if self.is_live(&c) && !fixed.contains(&c.node) {
                fixed.push(c.node);
            }
        }
        Some((best.t, fixed))
    }

    fn resolve(&mut self, tops: &[usize], changed: &mut Vec<usize>) -> Result<()> {
        let sums = &self.sums;
        let beta = |v: usize| -sums[v];
        let start = changed.len();
        for &top in tops {
            self.stats.rate_work +=
                solve_component(self.tree, &self.boundary, top, &beta, &mut self.lines, changed)?;
        }
        for i in start..changed.len() {
            let r = changed[i];
            self.version[r] += 1;
            self.push_candidate(r);
        }
        Ok(())
    }

    fn refresh_terms(&mut self, changed: &[usize]) {
        let epoch = self.next_epoch();
        for &v in changed {
            for j in std::iter::once(v).chain(self.tree.children(v).iter().copied()) {
                if self.stamp[j] != epoch {
                    self.stamp[j] = epoch;
                    let fresh = self.term(j);
                    self.lsecond += fresh - self.terms[j];
                    self.terms[j] = fresh;
                }
            }
        }
    }

    fn top_of(&self, mut v: usize) -> usize {
        while let Some(p) = self.tree.parent(v) {
            if self.boundary[p] {
                break;
            }
            v = p;
        }
        v
    }
}

/// Same contract as [`super::project`], re-solving only the subtrees whose
/// fixed set changed at each critical value.
pub fn project_incremental(tree: &RootedTree, fhat: &[f64]) -> Result<ProjectionResult> {
    let sums = ancestor_sums(tree, fhat)?;
    let q = tree.len();
    let t1 = sums.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = t1 - tie_tolerance(t1);
    let boundary: Vec<bool> = sums.values().iter().map(|&n| n >= cut).collect();
    let lines = (0..q)
        .map(|j| if boundary[j] { Line::new(1.0, -sums[j]) } else { Line::ZERO })
        .collect();
    let mut sweep = Sweep {
        tree,
        sums,
        boundary,
        lines,
        terms: vec![0.0; q],
        version: vec![0; q],
        stamp: vec![0; q],
        epoch: 0,
        heap: BinaryHeap::new(),
        t: t1,
        lprime: 0.0,
        lsecond: 0.0,
        stats: SweepStats::default(),
    };
    let tops = component_tops(tree, &sweep.boundary);
    let mut changed = Vec::new();
    sweep.resolve(&tops, &mut changed)?;
    for j in 0..q {
        sweep.terms[j] = sweep.term(j);
    }
    sweep.lsecond = sweep.terms.iter().sum();
    sweep.stats.iterations = 1;

    while let Some((t_next, newly_fixed)) = sweep.pop_critical() {
        let lprime_next = sweep.lprime + (t_next - sweep.t) * sweep.lsecond;
        if lprime_next < -1.0 {
            break;
        }
        sweep.t = t_next;
        sweep.lprime = lprime_next;
        changed.clear();
        for &j in &newly_fixed {
            sweep.boundary[j] = true;
            sweep.version[j] += 1;
            sweep.lines[j] = Line::new(1.0, -sweep.sums[j]);
            changed.push(j);
        }
        let epoch = sweep.next_epoch();
        let mut tops = Vec::new();
        for &j in &newly_fixed {
            let neighbours = tree.parent(j).into_iter().chain(tree.children(j).iter().copied());
            for w in neighbours {
                if sweep.boundary[w] {
                    continue;
                }
                let top = sweep.top_of(w);
                if sweep.stamp[top] != epoch {
                    sweep.stamp[top] = epoch;
                    tops.push(top);
                }
            }
        }
        sweep.resolve(&tops, &mut changed)?;
        sweep.refresh_terms(&changed);
        sweep.stats.iterations += 1;
    }

    let Sweep {
        t,
        lprime,
        lsecond,
        lines,
        stats,
        ..
    } = sweep;
    finalize(
        tree,
        fhat,
        t,
        lprime,
        lsecond,
        |ts| lines.iter().map(|l| l.at(ts)).collect(),
        stats,
    )
}
