//! Labeled rooted trees on `q` nodes, their Prüfer codes and the ancestry
//! matrix `U`.
//!
//! Nodes are stored 0-based: internal index `i` is node label `i + 1`, and
//! the root is always index 0 (label 1, the null mutation).

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, PpmError, Result};

/// A rooted tree with parent and ordered child adjacency kept in sync.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Parents always precede their children.
    preorder: Vec<usize>,
    entry: Vec<usize>,
    exit: Vec<usize>,
}

impl RootedTree {
    /// Builds a tree from a parent array. `parent[0]` must be `None`; every
    /// other node needs a parent, and the structure must reach every node
    /// from the root.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let q = parent.len();
        if q == 0 {
            return Err(PpmError::InvalidTree("tree has no nodes".into()));
        }
        if parent[0].is_some() {
            return Err(PpmError::InvalidTree("node 1 must be the root".into()));
        }
        let mut children = vec![Vec::new(); q];
        for (v, p) in parent.iter().enumerate().skip(1) {
            match *p {
                None => {
                    return Err(PpmError::InvalidTree(format!(
                        "node {} has no parent but only node 1 may be the root",
                        v + 1
                    )))
                }
                Some(p) if p >= q => {
                    return Err(PpmError::InvalidTree(format!(
                        "node {} has parent {} outside 1..{q}",
                        v + 1,
                        p + 1
                    )))
                }
                Some(p) if p == v => {
                    return Err(PpmError::InvalidTree(format!(
                        "node {} is its own parent",
                        v + 1
                    )))
                }
                Some(p) => children[p].push(v),
            }
        }
        // children are pushed in ascending v, so each list is already sorted
        let mut tree = RootedTree {
            parent,
            children,
            preorder: Vec::with_capacity(q),
            entry: vec![0; q],
            exit: vec![0; q],
        };
        tree.index()?;
        Ok(tree)
    }

    /// Parent array in the 1-based text convention: entry `i` is the label of
    /// the parent of node `i + 1`, `0` for the root.
    pub fn from_parent_labels(labels: &[usize]) -> Result<Self> {
        let parent = labels
            .iter()
            .enumerate()
            .map(|(v, &l)| match l {
                0 => Ok(None),
                l if l > labels.len() => Err(PpmError::InvalidTree(format!(
                    "node {} has parent label {l} outside 1..{}",
                    v + 1,
                    labels.len()
                ))),
                l => Ok(Some(l - 1)),
            })
            .collect::<Result<Vec<_>>>()?;
        if parent.iter().skip(1).any(Option::is_none) {
            return Err(PpmError::InvalidTree("only node 1 may be the root".into()));
        }
        Self::from_parents(parent)
    }

    pub fn single() -> Self {
        Self::from_parents(vec![None]).expect("single node tree")
    }

    /// The path 1 → 2 → … → q.
    pub fn chain(q: usize) -> Self {
        let parent = (0..q).map(|v| v.checked_sub(1)).collect();
        Self::from_parents(parent).expect("chain tree")
    }

    /// Node 1 with every other node as a direct child.
    pub fn star(q: usize) -> Self {
        let parent = (0..q).map(|v| if v == 0 { None } else { Some(0) }).collect();
        Self::from_parents(parent).expect("star tree")
    }

    /// Orients an unrooted edge list on `q` nodes away from node 1.
    pub fn from_edges(q: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if q == 0 {
            return Err(PpmError::InvalidTree("tree has no nodes".into()));
        }
        if edges.len() != q - 1 {
            return Err(PpmError::InvalidTree(format!(
                "{} edges given for {q} nodes",
                edges.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); q];
        for &(a, b) in edges {
            if a >= q || b >= q || a == b {
                return Err(PpmError::InvalidTree(format!("bad edge ({}, {})", a + 1, b + 1)));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut parent = vec![None; q];
        let mut seen = vec![false; q];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(PpmError::InvalidTree("edge list is not connected".into()));
        }
        Self::from_parents(parent)
    }

    fn index(&mut self) -> Result<()> {
        let q = self.parent.len();
        let mut clock = 0;
        let mut stack = vec![(0usize, 0usize)];
        self.preorder.clear();
        while let Some((v, next)) = stack.pop() {
            if next == 0 {
                self.preorder.push(v);
                self.entry[v] = clock;
                clock += 1;
            }
            if next < self.children[v].len() {
                stack.push((v, next + 1));
                stack.push((self.children[v][next], 0));
            } else {
                self.exit[v] = clock;
            }
        }
        if self.preorder.len() != q {
            return Err(PpmError::InvalidTree(
                "parent array contains a cycle or is disconnected".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Nodes without children. A single-node tree has one leaf.
    pub fn leaf_count(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    /// True when `a` is an ancestor of `b` or `a == b`.
    pub fn is_ancestor_or_self(&self, a: usize, b: usize) -> bool {
        self.entry[a] <= self.entry[b] && self.exit[b] <= self.exit[a]
    }

    pub fn depth(&self, v: usize) -> usize {
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    /// Parent array in the 1-based text convention (`0` for the root).
    pub fn parent_labels(&self) -> Vec<usize> {
        self.parent.iter().map(|p| p.map_or(0, |p| p + 1)).collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p, v)))
    }
}

/// A Prüfer sequence of `q - 2` node labels, each in `1..=q`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PruferCode(pub Vec<usize>);

impl PruferCode {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    /// The code whose base-`q` digits (most significant first) spell
    /// `index`; digit `d` stands for label `d + 1`. Codes in index order are
    /// in lexicographic order.
    pub fn from_index(mut index: u64, q: usize) -> Self {
        let len = q.saturating_sub(2);
        let mut seq = vec![1; len];
        for slot in seq.iter_mut().rev() {
            *slot = (index % q as u64) as usize + 1;
            index /= q as u64;
        }
        PruferCode(seq)
    }

    pub fn index(&self, q: usize) -> u64 {
        self.0
            .iter()
            .fold(0u64, |acc, &l| acc * q as u64 + (l as u64 - 1))
    }
}

/// Decodes a Prüfer code into the labeled tree on `1..=q`, oriented away
/// from node 1. `q` of 1 or 2 accept only the empty code.
pub fn decode_prufer(code: &PruferCode, q: usize) -> Result<RootedTree> {
    let mut scratch = PruferScratch::new(q);
    let parent = scratch.decode(code.labels(), q)?;
    RootedTree::from_parents(parent.to_vec())
}

/// Reusable buffers for decoding many codes of the same length.
pub(crate) struct PruferScratch {
    degree: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    queue: Vec<usize>,
}

impl PruferScratch {
    pub(crate) fn new(q: usize) -> Self {
        PruferScratch {
            degree: vec![0; q],
            adjacency: vec![Vec::with_capacity(4); q],
            parent: vec![None; q],
            queue: Vec::with_capacity(q),
        }
    }

    pub(crate) fn decode(&mut self, code: &[usize], q: usize) -> Result<&[Option<usize>]> {
        if q == 0 {
            return Err(PpmError::InvalidInput("q must be at least 1".into()));
        }
        if code.len() != q.saturating_sub(2) {
            return Err(PpmError::InvalidInput(format!(
                "Prüfer code for q = {q} needs {} labels, got {}",
                q.saturating_sub(2),
                code.len()
            )));
        }
        if let Some(&bad) = code.iter().find(|&&l| l == 0 || l > q) {
            return Err(PpmError::InvalidInput(format!(
                "Prüfer label {bad} outside 1..{q}"
            )));
        }
        self.degree.clear();
        self.degree.resize(q, 1);
        self.adjacency.resize_with(q, Vec::new);
        for a in self.adjacency.iter_mut() {
            a.clear();
        }
        for &l in code {
            self.degree[l - 1] += 1;
        }
        if q >= 2 {
            let mut ptr = self.degree.iter().position(|&d| d == 1).unwrap_or(0);
            let mut leaf = ptr;
            for &l in code {
                let v = l - 1;
                self.adjacency[leaf].push(v);
                self.adjacency[v].push(leaf);
                self.degree[leaf] -= 1;
                self.degree[v] -= 1;
                if self.degree[v] == 1 && v < ptr {
                    leaf = v;
                } else {
                    ptr += 1;
                    while self.degree[ptr] != 1 {
                        ptr += 1;
                    }
                    leaf = ptr;
                }
            }
            let last = q - 1;
            self.adjacency[leaf].push(last);
            self.adjacency[last].push(leaf);
        }
        self.parent.clear();
        self.parent.resize(q, None);
        self.queue.clear();
        self.queue.push(0);
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for i in 0..self.adjacency[v].len() {
                let w = self.adjacency[v][i];
                if w != 0 && self.parent[w].is_none() {
                    self.parent[w] = Some(v);
                    self.queue.push(w);
                }
            }
        }
        Ok(&self.parent)
    }
}

/// Standard Prüfer encoding: repeatedly strip the smallest-labeled leaf of
/// the unrooted tree and record its neighbour.
pub fn encode_prufer(tree: &RootedTree) -> PruferCode {
    let q = tree.len();
    if q <= 2 {
        return PruferCode(Vec::new());
    }
    let mut degree: Vec<usize> = (0..q)
        .map(|v| tree.children(v).len() + usize::from(tree.parent(v).is_some()))
        .collect();
    let mut removed = vec![false; q];
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (0..q).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut seq = Vec::with_capacity(q - 2);
    while seq.len() < q - 2 {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        removed[leaf] = true;
        let neighbour = tree
            .parent(leaf)
            .into_iter()
            .chain(tree.children(leaf).iter().copied())
            .find(|&w| !removed[w])
            .expect("leaf keeps one neighbour");
        seq.push(neighbour + 1);
        degree[neighbour] -= 1;
        if degree[neighbour] == 1 {
            leaves.push(Reverse(neighbour));
        }
    }
    PruferCode(seq)
}

/// Number of labeled trees on `q` nodes, each rooted at node 1: `q^(q-2)`,
/// and 1 for `q` of 1 or 2.
pub fn count_trees(q: usize) -> Result<u64> {
    match q {
        0 => Err(PpmError::InvalidInput("q must be at least 1".into())),
        1 | 2 => Ok(1),
        _ => {
            let exp = u32::try_from(q - 2)
                .map_err(|_| PpmError::Overflow(format!("{q}^{} trees", q - 2)))?;
            (q as u64)
                .checked_pow(exp)
                .ok_or_else(|| PpmError::Overflow(format!("{q}^{} does not fit in 64 bits", q - 2)))
        }
    }
}

/// Ancestor-and-self sums `N_i` of one frequency column.
#[derive(Clone, Debug, PartialEq)]
pub struct AncestrySums(Vec<f64>);

impl AncestrySums {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for AncestrySums {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn ancestor_sums(tree: &RootedTree, fhat: &[f64]) -> Result<AncestrySums> {
    if fhat.len() != tree.len() {
        return Err(PpmError::InvalidInput(format!(
            "frequency column has {} entries for a tree with {} nodes",
            fhat.len(),
            tree.len()
        )));
    }
    check_finite(fhat, "frequency")?;
    let mut sums = vec![0.0; tree.len()];
    for &v in tree.preorder() {
        sums[v] = tree.parent(v).map_or(0.0, |p| sums[p]) + fhat[v];
    }
    Ok(AncestrySums(sums))
}

/// `U[v][w] = 1` iff `v` is an ancestor of `w` or `v == w`.
pub fn ancestry_matrix(tree: &RootedTree) -> DMatrix<i64> {
    let q = tree.len();
    DMatrix::from_fn(q, q, |v, w| i64::from(tree.is_ancestor_or_self(v, w)))
}

/// `T[i][j] = 1` iff `i` is the parent of `j`.
pub fn closest_ancestor_matrix(tree: &RootedTree) -> DMatrix<i64> {
    let q = tree.len();
    let mut t = DMatrix::zeros(q, q);
    for (p, v) in tree.edges() {
        t[(p, v)] = 1;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_codes(q: usize) -> impl Iterator<Item = PruferCode> {
        let total = count_trees(q).unwrap();
        (0..total).map(move |i| PruferCode::from_index(i, q))
    }

    #[test]
    fn star_decodes_from_repeated_root() {
        let t = decode_prufer(&PruferCode(vec![1, 1]), 4).unwrap();
        assert_eq!(t.children(0), &[1, 2, 3]);
        assert_eq!(t, RootedTree::star(4));
        assert_eq!(encode_prufer(&t), PruferCode(vec![1, 1]));
    }

    #[test]
    fn tiny_trees() {
        let t = decode_prufer(&PruferCode(vec![]), 2).unwrap();
        assert_eq!(t.parents(), &[None, Some(0)]);
        assert_eq!(decode_prufer(&PruferCode(vec![]), 1).unwrap(), RootedTree::single());
        assert!(decode_prufer(&PruferCode(vec![1]), 2).is_err());
    }

    #[test]
    fn chain_encodes_to_middle_node() {
        assert_eq!(encode_prufer(&RootedTree::chain(3)), PruferCode(vec![2]));
        assert_eq!(decode_prufer(&PruferCode(vec![2]), 3).unwrap(), RootedTree::chain(3));
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(decode_prufer(&PruferCode(vec![5, 1]), 4).is_err());
        assert!(decode_prufer(&PruferCode(vec![0, 1]), 4).is_err());
    }

    #[test]
    fn exhaustive_round_trip_small_q() {
        for q in 3..=6 {
            let mut seen = std::collections::HashSet::new();
            for code in all_codes(q) {
                let tree = decode_prufer(&code, q).unwrap();
                assert_eq!(encode_prufer(&tree), code);
                assert!(seen.insert(tree.parent_labels()));
            }
            assert_eq!(seen.len() as u64, count_trees(q).unwrap());
        }
    }

    #[test]
    fn index_order_is_lexicographic() {
        let q = 5;
        let codes: Vec<_> = all_codes(q).collect();
        assert!(codes.windows(2).all(|w| w[0] < w[1]));
        for (i, c) in codes.iter().enumerate() {
            assert_eq!(c.index(q), i as u64);
        }
    }

    #[test]
    fn counts() {
        assert_eq!(count_trees(1).unwrap(), 1);
        assert_eq!(count_trees(2).unwrap(), 1);
        assert_eq!(count_trees(7).unwrap(), 16_807);
        assert_eq!(count_trees(10).unwrap(), 100_000_000);
        assert_eq!(count_trees(11).unwrap(), 2_357_947_691);
        assert!(matches!(count_trees(40), Err(PpmError::Overflow(_))));
        assert!(count_trees(0).is_err());
    }

    #[test]
    fn sums_along_paths() {
        let chain = RootedTree::chain(2);
        let n = ancestor_sums(&chain, &[0.5, 0.7]).unwrap();
        assert_eq!(n.values(), &[0.5, 0.5 + 0.7]);
        let star = RootedTree::star(3);
        assert_eq!(ancestor_sums(&star, &[1.0, 2.0, 3.0]).unwrap().values(), &[1.0, 3.0, 4.0]);
        assert_eq!(ancestor_sums(&star, &[0.0; 3]).unwrap().values(), &[0.0; 3]);
        assert!(ancestor_sums(&star, &[0.0, f64::NAN, 1.0]).is_err());
        assert!(ancestor_sums(&star, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ancestry_matrices() {
        let u = ancestry_matrix(&RootedTree::chain(2));
        assert_eq!(u, DMatrix::from_row_slice(2, 2, &[1, 1, 0, 1]));
        let u = ancestry_matrix(&RootedTree::star(3));
        assert_eq!(u, DMatrix::from_row_slice(3, 3, &[1, 1, 1, 0, 1, 0, 0, 0, 1]));
    }

    #[test]
    fn parent_array_validation() {
        assert!(RootedTree::from_parent_labels(&[0, 3]).is_err());
        assert!(RootedTree::from_parent_labels(&[0, 0]).is_err());
        assert!(RootedTree::from_parent_labels(&[2, 0]).is_err());
        // 2 and 3 point at each other, unreachable from the root
        assert!(RootedTree::from_parent_labels(&[0, 3, 2]).is_err());
        let t = RootedTree::from_parent_labels(&[0, 1, 1, 2]).unwrap();
        assert_eq!(t.children(0), &[1, 2]);
        assert_eq!(t.children(1), &[3]);
        assert_eq!(t.parent_labels(), vec![0, 1, 1, 2]);
        assert!(t.is_ancestor_or_self(0, 3));
        assert!(t.is_ancestor_or_self(1, 3));
        assert!(!t.is_ancestor_or_self(2, 3));
        assert_eq!(t.depth(3), 2);
    }
}
