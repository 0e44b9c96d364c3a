//! Exhaustive search over every labeled tree on `q` nodes rooted at node 1.
//!
//! Trees are visited by Prüfer index: index `i` is the code whose base-`q`
//! digits spell `i`, so index order is lexicographic code order. Workers take
//! contiguous index ranges, keep their own top-k, and the lists are merged.

use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PpmError, Result};
use crate::matrix::FrequencyMatrix;
use crate::projection::{project, project_matrix};
use crate::tree::{count_trees, encode_prufer, PruferCode, PruferScratch, RootedTree};

/// Largest `q` searched without `force`.
pub const DEFAULT_MAX_Q: usize = 11;

/// Monotone transform `J` applied to the projection cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    #[default]
    Identity,
    Log1p,
    Square,
}

impl Scaling {
    pub fn apply(self, cost: f64) -> f64 {
        match self {
            Scaling::Identity => cost,
            Scaling::Log1p => cost.ln_1p(),
            Scaling::Square => cost * cost,
        }
    }
}

impl FromStr for Scaling {
    type Err = PpmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Scaling::Identity),
            "log1p" => Ok(Scaling::Log1p),
            "square" => Ok(Scaling::Square),
            _ => Err(PpmError::InvalidInput(format!(
                "unknown scaling '{s}' (expected identity, log1p or square)"
            ))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::Identity => "identity",
            Scaling::Log1p => "log1p",
            Scaling::Square => "square",
        })
    }
}

/// Topology penalty `Q` added to the scaled cost.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Penalty {
    #[default]
    Zero,
    /// Weight per leaf.
    LeafCount(f64),
    /// Per-tree values keyed by Prüfer code; trees not listed get 0.
    Table(BTreeMap<PruferCode, f64>),
}

impl Penalty {
    pub fn table(entries: impl IntoIterator<Item = (PruferCode, f64)>) -> Result<Self> {
        let map: BTreeMap<_, _> = entries.into_iter().collect();
        if map.values().any(|v| !v.is_finite()) {
            return Err(PpmError::InvalidInput("penalty table values must be finite".into()));
        }
        Ok(Penalty::Table(map))
    }

    fn value(&self, tree: &RootedTree, code: Option<&PruferCode>) -> f64 {
        match self {
            Penalty::Zero => 0.0,
            Penalty::LeafCount(w) => w * tree.leaf_count() as f64,
            Penalty::Table(map) => match code {
                Some(c) => map.get(c).copied().unwrap_or(0.0),
                None => map.get(&encode_prufer(tree)).copied().unwrap_or(0.0),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpec {
    pub fhat: FrequencyMatrix,
    pub k: usize,
    pub scaling: Scaling,
    pub penalty: Penalty,
}

impl SearchSpec {
    pub fn new(fhat: FrequencyMatrix, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(PpmError::InvalidInput("k must be at least 1".into()));
        }
        Ok(SearchSpec {
            fhat,
            k,
            scaling: Scaling::Identity,
            penalty: Penalty::Zero,
        })
    }

    pub fn q(&self) -> usize {
        self.fhat.rows()
    }
}

/// `J(cost) + Q(tree)`.
pub fn objective(cost: f64, tree: &RootedTree, spec: &SearchSpec) -> f64 {
    spec.scaling.apply(cost) + spec.penalty.value(tree, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    pub workers: usize,
    pub max_q: usize,
    /// Search beyond `max_q` anyway.
    pub force: bool,
    /// Attach `M*` and `F*` to every ranked tree.
    pub include_solutions: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_q: DEFAULT_MAX_Q,
            force: false,
            include_solutions: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTree {
    pub rank: usize,
    pub prufer: PruferCode,
    /// Parent labels in the tree text convention.
    pub parents: Vec<usize>,
    pub objective: f64,
    pub cost: f64,
    /// One simplex vector per sample.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m_star: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_star: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub q: usize,
    pub samples: usize,
    pub ranked: Vec<RankedTree>,
    pub trees_evaluated: u64,
    pub workers: usize,
    pub elapsed_sec: f64,
}

/// Splits `0..total` into at most `workers` contiguous ranges of nearly
/// equal length, in order.
pub fn partition(total: u64, workers: usize) -> Vec<Range<u64>> {
    let n = (workers.max(1) as u64).min(total.max(1));
    let (base, extra) = (total / n, total % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let len = base + u64::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Scored {
    objective: f64,
    cost: f64,
    index: u64,
}

impl Scored {
    fn key(&self) -> (f64, u64) {
        (self.objective, self.index)
    }
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, i) = self.key();
        let (b, j) = other.key();
        a.total_cmp(&b).then(i.cmp(&j))
    }
}

/// Frobenius cost over all columns without keeping per-column solutions.
fn matrix_cost(tree: &RootedTree, fhat: &FrequencyMatrix) -> Result<f64> {
    let mut sq = 0.0;
    for col in fhat.columns() {
        let c = project(tree, col)?.cost;
        sq += c * c;
    }
    Ok(sq.sqrt())
}

fn scan(spec: &SearchSpec, range: Range<u64>) -> Result<Vec<Scored>> {
    let q = spec.q();
    let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(spec.k + 1);
    let mut scratch = PruferScratch::new(q);
    let mut code = PruferCode::from_index(range.start, q);
    let needs_code = matches!(spec.penalty, Penalty::Table(_));
    for index in range {
        let parents = scratch.decode(code.labels(), q)?.to_vec();
        let tree = RootedTree::from_parents(parents)?;
        let cost = matrix_cost(&tree, &spec.fhat)?;
        let objective =
            spec.scaling.apply(cost) + spec.penalty.value(&tree, needs_code.then_some(&code));
        let entry = Scored {
            objective,
            cost,
            index,
        };
        if heap.len() < spec.k {
            heap.push(entry);
        } else if heap.peek().is_some_and(|worst| entry < *worst) {
            heap.pop();
            heap.push(entry);
        }
        advance(&mut code, q);
    }
    Ok(heap.into_sorted_vec())
}

/// Next code in index order (wraps at the end, which is harmless since the
/// last index is never advanced past and used).
fn advance(code: &mut PruferCode, q: usize) {
    for slot in code.0.iter_mut().rev() {
        if *slot < q {
            *slot += 1;
            return;
        }
        *slot = 1;
    }
}

pub fn search_all(spec: &SearchSpec, options: &SearchOptions) -> Result<SearchReport> {
    let q = spec.q();
    if spec.k == 0 {
        return Err(PpmError::InvalidInput("k must be at least 1".into()));
    }
    let total = count_trees(q)?;
    if q > options.max_q && !options.force {
        return Err(PpmError::Refused(format!(
            "q = {q} means {q}^{} = {total} trees, beyond the default limit of q = {}; force the search to run it anyway",
            q.saturating_sub(2),
            options.max_q
        )));
    }
    let start = Instant::now();
    let ranges = partition(total, options.workers);
    let workers = ranges.len();
    let lists: Vec<Result<Vec<Scored>>> = if workers == 1 {
        vec![scan(spec, ranges[0].clone())]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = ranges
                .iter()
                .cloned()
                .map(|r| s.spawn(move || scan(spec, r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("search worker panicked"))
                .collect()
        })
    };
    let mut merged = Vec::with_capacity(workers * spec.k);
    for list in lists {
        merged.extend(list?);
    }
    merged.sort_unstable();
    merged.truncate(spec.k);

    let mut ranked = Vec::with_capacity(merged.len());
    for (rank, s) in merged.iter().enumerate() {
        let prufer = PruferCode::from_index(s.index, q);
        let tree = crate::tree::decode_prufer(&prufer, q)?;
        let (m_star, f_star) = if options.include_solutions {
            let sol = project_matrix(&tree, &spec.fhat)?;
            (
                Some(sol.columns.iter().map(|c| c.m_star.clone()).collect()),
                Some(sol.columns.iter().map(|c| c.f_star.clone()).collect()),
            )
        } else {
            (None, None)
        };
        ranked.push(RankedTree {
            rank: rank + 1,
            prufer,
            parents: tree.parent_labels(),
            objective: s.objective,
            cost: s.cost,
            m_star,
            f_star,
        });
    }
    Ok(SearchReport {
        q,
        samples: spec.fhat.cols(),
        ranked,
        trees_evaluated: total,
        workers,
        elapsed_sec: start.elapsed().as_secs_f64(),
    })
}

/// How a pair of mutations relates within one tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// One mutation sits at a proper ancestor of the other's node.
    Ancestral,
    /// Both sit at the same node.
    Clustered,
    /// At least one of them is absent from the tree.
    Missing,
    Incomparable,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Ancestral,
        Relation::Clustered,
        Relation::Missing,
        Relation::Incomparable,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

/// A tree whose nodes carry mutation identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedTree {
    pub tree: RootedTree,
    /// Mutation id to node index.
    pub placement: BTreeMap<u64, usize>,
}

impl AnnotatedTree {
    pub fn new(tree: RootedTree, placement: impl IntoIterator<Item = (u64, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (mutation, node) in placement {
            if node >= tree.len() {
                return Err(PpmError::InvalidInput(format!(
                    "mutation {mutation} placed at node index {node} of a {}-node tree",
                    tree.len()
                )));
            }
            if map.insert(mutation, node).is_some() {
                return Err(PpmError::InvalidInput(format!("mutation {mutation} placed twice")));
            }
        }
        Ok(AnnotatedTree { tree, placement: map })
    }

    /// One mutation per node, the mutation id being the node label.
    pub fn labeled(tree: RootedTree) -> Self {
        let placement = (0..tree.len()).map(|v| (v as u64 + 1, v)).collect();
        AnnotatedTree { tree, placement }
    }

    pub fn relation(&self, a: u64, b: u64) -> Relation {
        match (self.placement.get(&a), self.placement.get(&b)) {
            (Some(&u), Some(&v)) if u == v => Relation::Clustered,
            (Some(&u), Some(&v)) => {
                if self.tree.is_ancestor_or_self(u, v) || self.tree.is_ancestor_or_self(v, u) {
                    Relation::Ancestral
                } else {
                    Relation::Incomparable
                }
            }
            _ => Relation::Missing,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub ancestral: u64,
    pub clustered: u64,
    pub missing: u64,
    pub incomparable: u64,
}

impl RelationCounts {
    fn from_slots(s: [u64; 4]) -> Self {
        RelationCounts {
            ancestral: s[0],
            clustered: s[1],
            missing: s[2],
            incomparable: s[3],
        }
    }

    pub fn get(&self, r: Relation) -> u64 {
        match r {
            Relation::Ancestral => self.ancestral,
            Relation::Clustered => self.clustered,
            Relation::Missing => self.missing,
            Relation::Incomparable => self.incomparable,
        }
    }

    pub fn total(&self) -> u64 {
        self.ancestral + self.clustered + self.missing + self.incomparable
    }
}

/// Per reference category: the fraction of its pairs that the candidate
/// placed in a different category (`None` when the reference has no pair
/// in that category).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationErrors {
    pub ancestral: Option<f64>,
    pub clustered: Option<f64>,
    pub missing: Option<f64>,
    pub incomparable: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationComparison {
    pub mutations: usize,
    pub pairs: u64,
    pub candidate: RelationCounts,
    pub reference: RelationCounts,
    /// Pairs whose category differs, grouped by reference category.
    pub mismatches: RelationCounts,
    pub error_fraction: RelationErrors,
    pub overall_error: f64,
}

/// Relations of every unordered pair of `mutations`, in lexicographic pair
/// order.
pub fn classify_pairs(tree: &AnnotatedTree, mutations: &[u64]) -> Vec<Relation> {
    let n = mutations.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(tree.relation(mutations[i], mutations[j]));
        }
    }
    out
}

/// Scores one categorization of pairs against another.
pub fn score_categories(candidate: &[Relation], reference: &[Relation], mutations: usize) -> Result<RelationComparison> {
    if candidate.len() != reference.len() {
        return Err(PpmError::InvalidInput("category lists differ in length".into()));
    }
    let (mut cand, mut refc, mut miss) = ([0u64; 4], [0u64; 4], [0u64; 4]);
    for (&c, &r) in candidate.iter().zip(reference) {
        cand[c.slot()] += 1;
        refc[r.slot()] += 1;
        if c != r {
            miss[r.slot()] += 1;
        }
    }
    let frac = |r: Relation| (refc[r.slot()] > 0).then(|| miss[r.slot()] as f64 / refc[r.slot()] as f64);
    let pairs = candidate.len() as u64;
    let wrong: u64 = miss.iter().sum();
    Ok(RelationComparison {
        mutations,
        pairs,
        candidate: RelationCounts::from_slots(cand),
        reference: RelationCounts::from_slots(refc),
        mismatches: RelationCounts::from_slots(miss),
        error_fraction: RelationErrors {
            ancestral: frac(Relation::Ancestral),
            clustered: frac(Relation::Clustered),
            missing: frac(Relation::Missing),
            incomparable: frac(Relation::Incomparable),
        },
        overall_error: if pairs == 0 { 0.0 } else { wrong as f64 / pairs as f64 },
    })
}

/// Compares the pairwise relations of two annotated trees over the union of
/// their mutations.
pub fn compare_relations(candidate: &AnnotatedTree, reference: &AnnotatedTree) -> RelationComparison {
    let universe: Vec<u64> = candidate
        .placement
        .keys()
        .chain(reference.placement.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let c = classify_pairs(candidate, &universe);
    let r = classify_pairs(reference, &universe);
    score_categories(&c, &r, universe.len()).expect("same pair list")
}
