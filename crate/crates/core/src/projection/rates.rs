//! Rates of change of the inner dual minimizer along one linear segment.
//!
//! Fixed nodes split the tree into independent weighted tree-Laplacian
//! problems. Each one is solved in closed form: free leaves are pruned
//! (they copy their parent), free nodes whose children are all fixed are
//! folded into a single fixed node with a harmonic edge weight, and the
//! last free node of a component is a weighted average of its neighbours.

use crate::error::{PpmError, Result};
use crate::tree::{AncestrySums, RootedTree};

/// `slope * t + intercept`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub const ZERO: Line = Line {
        slope: 0.0,
        intercept: 0.0,
    };

    pub fn new(slope: f64, intercept: f64) -> Self {
        Line { slope, intercept }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

#[derive(Clone, Copy, Default)]
struct WeightedSum {
    weight: f64,
    slope: f64,
    intercept: f64,
}

impl WeightedSum {
    fn add(&mut self, gamma: f64, line: Line) {
        self.weight += gamma;
        self.slope += gamma * line.slope;
        self.intercept += gamma * line.intercept;
    }

    fn mean(&self) -> Line {
        Line::new(self.slope / self.weight, self.intercept / self.weight)
    }
}

/// Minimizer of a star problem: one free centre joined to its parent line
/// with weight `center_gamma` and to fixed leaves `(gamma, line)`.
pub fn star_solve(center_gamma: f64, parent: Line, leaves: &[(f64, Line)]) -> Line {
    let mut acc = WeightedSum::default();
    acc.add(center_gamma, parent);
    for &(gamma, line) in leaves {
        acc.add(gamma, line);
    }
    acc.mean()
}

/// A `(T, B, alpha, beta, gamma)` problem: minimize
/// `1/2 * sum_j gamma_j (Z_j - Z_parent(j))^2` over the free nodes, with
/// `Z_j = alpha_j t + beta_j` for fixed `j` and a zero phantom parent above
/// the root.
#[derive(Clone, Debug, PartialEq)]
pub struct SubtreeProblem {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    fixed: Vec<bool>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    removed: Vec<bool>,
}

/// State needed to undo one [`SubtreeProblem::reduce_node`].
#[derive(Debug)]
pub struct Reduction {
    node: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    children: Vec<usize>,
}

/// Nodes removed by pruning, in removal order, with the parent each one
/// copies its solution from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PruneLog {
    pub pruned: Vec<(usize, usize)>,
}

impl PruneLog {
    /// Copies parent solutions onto pruned nodes, last pruned first so that
    /// chains of pruned nodes resolve top-down.
    pub fn backfill(&self, out: &mut [Line]) {
        for &(node, parent) in self.pruned.iter().rev() {
            out[node] = out[parent];
        }
    }
}

impl SubtreeProblem {
    /// Node 0 is not required to be the root; the root is the node whose
    /// parent is `None`.
    pub fn new(
        parent: Vec<Option<usize>>,
        fixed: Vec<bool>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let n = parent.len();
        if [fixed.len(), alpha.len(), beta.len(), gamma.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(PpmError::InvalidInput("subtree problem arrays differ in length".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0)) {
            return Err(PpmError::InvalidInput(format!("edge weight {g} is not positive")));
        }
        let mut children = vec![Vec::new(); n];
        let mut roots = 0;
        for (v, p) in parent.iter().enumerate() {
            match *p {
                Some(p) if p < n && p != v => children[p].push(v),
                Some(p) => {
                    return Err(PpmError::InvalidInput(format!("bad parent {p} for node {v}")))
                }
                None => roots += 1,
            }
        }
        if roots != 1 {
            return Err(PpmError::InvalidInput(format!("{roots} roots in subtree problem")));
        }
        for v in 0..n {
            if fixed[v] && parent[v].is_some() && !children[v].is_empty() {
                return Err(PpmError::Invariant(format!(
                    "fixed node {v} is neither a leaf nor the root of its subtree"
                )));
            }
        }
        Ok(SubtreeProblem {
            parent,
            children,
            fixed,
            alpha,
            beta,
            gamma,
            removed: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn is_fixed(&self, v: usize) -> bool {
        self.fixed[v]
    }

    pub fn is_removed(&self, v: usize) -> bool {
        self.removed[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn coefficients(&self, v: usize) -> (f64, f64, f64) {
        (self.alpha[v], self.beta[v], self.gamma[v])
    }

    fn parent_line(&self, j: usize) -> Option<Line> {
        match self.parent[j] {
            None => Some(Line::ZERO),
            Some(p) if self.fixed[p] => Some(Line::new(self.alpha[p], self.beta[p])),
            Some(_) => None,
        }
    }

    fn children_sum(&self, j: usize) -> WeightedSum {
        let mut acc = WeightedSum::default();
        for &c in &self.children[j] {
            acc.add(self.gamma[c], Line::new(self.alpha[c], self.beta[c]));
        }
        acc
    }

    /// Removes free non-root leaves until every remaining leaf is fixed.
    pub fn prune_free_leaves(&mut self) -> PruneLog {
        let mut log = PruneLog::default();
        let mut stack: Vec<usize> = (0..self.len())
            .filter(|&v| self.is_prunable(v))
            .collect();
        while let Some(v) = stack.pop() {
            let p = self.parent[v].expect("prunable nodes have a parent");
            self.removed[v] = true;
            let siblings = &mut self.children[p];
            let at = siblings.iter().position(|&c| c == v).expect("child listed");
            siblings.remove(at);
            log.pruned.push((v, p));
            if self.is_prunable(p) {
                stack.push(p);
            }
        }
        log
    }

    fn is_prunable(&self, v: usize) -> bool {
        !self.removed[v] && !self.fixed[v] && self.parent[v].is_some() && self.children[v].is_empty()
    }

    /// Folds free node `j`, whose children are all fixed and whose parent is
    /// free, into a fixed node carrying the children's weighted-average line
    /// and the series combination of its own and its children's weights.
    pub fn reduce_node(&mut self, j: usize) -> Result<Reduction> {
        if self.fixed[j] || self.removed[j] {
            return Err(PpmError::Invariant(format!("node {j} is not a free node")));
        }
        match self.parent[j] {
            Some(p) if !self.fixed[p] => {}
            _ => return Err(PpmError::Invariant(format!("parent of node {j} is not free"))),
        }
        if self.children[j].is_empty() || self.children[j].iter().any(|&c| !self.fixed[c]) {
            return Err(PpmError::Invariant(format!(
                "node {j} must have children and all of them fixed"
            )));
        }
        let acc = self.children_sum(j);
        let undo = Reduction {
            node: j,
            alpha: self.alpha[j],
            beta: self.beta[j],
            gamma: self.gamma[j],
            children: std::mem::take(&mut self.children[j]),
        };
        let mean = acc.mean();
        self.alpha[j] = mean.slope;
        self.beta[j] = mean.intercept;
        self.gamma[j] = 1.0 / (1.0 / undo.gamma + 1.0 / acc.weight);
        self.fixed[j] = true;
        Ok(undo)
    }

    pub fn undo_reduction(&mut self, undo: Reduction) {
        let j = undo.node;
        self.alpha[j] = undo.alpha;
        self.beta[j] = undo.beta;
        self.gamma[j] = undo.gamma;
        self.children[j] = undo.children;
        self.fixed[j] = false;
    }

    fn checksum(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.children.hash(&mut h);
        self.fixed.hash(&mut h);
        for v in self.alpha.iter().chain(&self.beta).chain(&self.gamma) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Solves every remaining free node as an explicit line in `t`, writing
    /// into `out` (indexed like the problem). Expects pruned input: every
    /// free non-root node has at least one child. Reductions are applied in
    /// place and undone before returning. Returns the number of
    /// node-neighbour terms touched.
    pub fn compute_rates_rec(&mut self, out: &mut [Line]) -> Result<usize> {
        let n = self.len();
        let before = if cfg!(debug_assertions) { self.checksum() } else { 0 };
        let mut free_children = vec![0usize; n];
        for v in 0..n {
            if !self.removed[v] {
                free_children[v] = self.children[v].iter().filter(|&&c| !self.fixed[c]).count();
            }
        }
        let mut ready: Vec<usize> = (0..n)
            .rev()
            .filter(|&v| !self.removed[v] && !self.fixed[v] && free_children[v] == 0)
            .collect();
        let mut undo = Vec::new();
        let mut solved = vec![false; n];
        let mut work = 0;
        while let Some(j) = ready.pop() {
            work += self.children[j].len() + 1;
            if let Some(parent) = self.parent_line(j) {
                let mut acc = self.children_sum(j);
                acc.add(self.gamma[j], parent);
                out[j] = acc.mean();
                solved[j] = true;
                continue;
            }
            let p = self.parent[j].expect("free parent exists");
            undo.push(self.reduce_node(j)?);
            free_children[p] -= 1;
            if free_children[p] == 0 {
                ready.push(p);
            }
        }
        while let Some(step) = undo.pop() {
            let j = step.node;
            self.undo_reduction(step);
            let p = self.parent[j].expect("reduced nodes have a parent");
            debug_assert!(solved[p]);
            let mut acc = self.children_sum(j);
            acc.add(self.gamma[j], out[p]);
            out[j] = acc.mean();
            solved[j] = true;
            work += self.children[j].len() + 1;
        }
        debug_assert_eq!(before, self.checksum(), "problem not restored");
        if let Some(v) = (0..n).find(|&v| !self.removed[v] && !self.fixed[v] && !solved[v]) {
            return Err(PpmError::Invariant(format!(
                "free node {v} left unsolved; problem was not pruned"
            )));
        }
        Ok(work)
    }

    /// Prunes, solves and back-fills: lines for every free node, and the
    /// fixed lines for fixed nodes.
    pub fn solve(mut self) -> Result<(Vec<Line>, usize)> {
        let n = self.len();
        let log = self.prune_free_leaves();
        let mut out = vec![Line::ZERO; n];
        for v in 0..n {
            if self.fixed[v] {
                out[v] = Line::new(self.alpha[v], self.beta[v]);
            }
        }
        let work = self.compute_rates_rec(&mut out)? + log.pruned.len();
        log.backfill(&mut out);
        Ok((out, work))
    }
}

/// Output of [`compute_rates`].
#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub z_rate: Vec<f64>,
    pub lsecond: f64,
    /// Node-neighbour terms touched, for complexity checks.
    pub work: usize,
}

/// Free nodes whose parent is fixed or absent: one per induced subtree.
pub(crate) fn component_tops(tree: &RootedTree, boundary: &[bool]) -> Vec<usize> {
    tree.preorder()
        .iter()
        .copied()
        .filter(|&v| !boundary[v] && tree.parent(v).is_none_or(|p| boundary[p]))
        .collect()
}

/// Builds the subtree problem hanging from free node `top` and writes the
/// solved lines of its free nodes into `out`. `beta(v)` is the intercept of
/// fixed node `v`. Returns the free nodes written and the work count.
pub(crate) fn solve_component(
    tree: &RootedTree,
    boundary: &[bool],
    top: usize,
    beta: &dyn Fn(usize) -> f64,
    out: &mut [Line],
    written: &mut Vec<usize>,
) -> Result<usize> {
    let mut nodes = Vec::new();
    let mut parent = Vec::new();
    let mut stack = Vec::new();
    match tree.parent(top) {
        Some(p) => {
            nodes.push(p);
            parent.push(None);
            stack.push((top, Some(0)));
        }
        None => stack.push((top, None)),
    }
    while let Some((v, lp)) = stack.pop() {
        let id = nodes.len();
        nodes.push(v);
        parent.push(lp);
        if !boundary[v] {
            for &c in tree.children(v).iter().rev() {
                stack.push((c, Some(id)));
            }
        }
    }
    let fixed: Vec<bool> = nodes.iter().map(|&v| boundary[v]).collect();
    let alpha: Vec<f64> = fixed.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let betas: Vec<f64> = nodes
        .iter()
        .zip(&fixed)
        .map(|(&v, &f)| if f { beta(v) } else { 0.0 })
        .collect();
    let gamma = vec![1.0; nodes.len()];
    let problem = SubtreeProblem::new(parent, fixed.clone(), alpha, betas, gamma)?;
    let (lines, work) = problem.solve()?;
    for (local, &v) in nodes.iter().enumerate() {
        if !fixed[local] {
            out[v] = lines[local];
            written.push(v);
        }
    }
    Ok(work)
}

fn solve_all(
    tree: &RootedTree,
    boundary: &[bool],
    fixed_line: &dyn Fn(usize) -> Line,
) -> Result<(Vec<Line>, usize)> {
    if boundary.len() != tree.len() {
        return Err(PpmError::InvalidInput("boundary mask length differs from tree".into()));
    }
    let mut out = vec![Line::ZERO; tree.len()];
    for v in 0..tree.len() {
        if boundary[v] {
            out[v] = fixed_line(v);
        }
    }
    let beta = |v: usize| fixed_line(v).intercept;
    let mut work = 0;
    let mut written = Vec::new();
    for top in component_tops(tree, boundary) {
        work += solve_component(tree, boundary, top, &beta, &mut out, &mut written)?;
    }
    Ok((out, work))
}

/// `sum_j (rate_j - rate_parent(j))^2`, with a zero rate above the root.
pub fn second_derivative(tree: &RootedTree, z_rate: &[f64]) -> f64 {
    (0..tree.len())
        .map(|j| {
            let d = z_rate[j] - tree.parent(j).map_or(0.0, |p| z_rate[p]);
            d * d
        })
        .sum()
}

/// Rates `Z'` (1 on the boundary) and `L''` for the segment just below the
/// critical value at which `boundary` became the fixed set.
pub fn compute_rates(tree: &RootedTree, boundary: &[bool]) -> Result<Rates> {
    let (lines, work) = solve_all(tree, boundary, &|_| Line::new(1.0, 0.0))?;
    let z_rate: Vec<f64> = lines.iter().map(|l| l.slope).collect();
    let lsecond = second_derivative(tree, &z_rate);
    Ok(Rates {
        z_rate,
        lsecond,
        work: work + tree.len(),
    })
}

/// The minimizer of the inner dual as explicit lines `Z_j(t)`, exact while
/// the fixed set stays `boundary`.
pub fn segment_lines(tree: &RootedTree, boundary: &[bool], sums: &AncestrySums) -> Result<Vec<Line>> {
    solve_all(tree, boundary, &|v| Line::new(1.0, -sums[v])).map(|(l, _)| l)
}
