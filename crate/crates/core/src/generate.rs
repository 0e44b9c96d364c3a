//! Seeded random instances: uniform labeled trees, truncated
//! Galton–Watson trees, Gaussian frequency columns and noiseless PPM data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PpmError, Result};
use crate::matrix::FrequencyMatrix;
use crate::tree::{decode_prufer, PruferCode, RootedTree};

/// Generator recorded alongside generated data.
pub const RNG_NAME: &str = "chacha8";

pub type InstanceRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform over all `q^(q-2)` labeled trees rooted at node 1.
pub fn random_tree<R: Rng + ?Sized>(q: usize, rng: &mut R) -> RootedTree {
    match q {
        0 | 1 => RootedTree::single(),
        2 => RootedTree::chain(2),
        _ => {
            let code = PruferCode((0..q - 2).map(|_| rng.random_range(1..=q)).collect());
            decode_prufer(&code, q).expect("random code is valid")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaltonWatsonSpec {
    pub q: usize,
    pub cmin: usize,
    pub cmax: usize,
    pub seed: u64,
}

impl GaltonWatsonSpec {
    pub fn new(q: usize, cmin: usize, cmax: usize, seed: u64) -> Result<Self> {
        if q == 0 || cmin == 0 || cmin > cmax {
            return Err(PpmError::InvalidInput(format!(
                "need q >= 1 and 1 <= cmin <= cmax, got q = {q}, cmin = {cmin}, cmax = {cmax}"
            )));
        }
        Ok(GaltonWatsonSpec { q, cmin, cmax, seed })
    }

    pub fn generate(&self) -> RootedTree {
        galton_watson(self.q, self.cmin, self.cmax, &mut seeded(self.seed))
    }
}

/// Grows the tree breadth-first, giving each node a uniform number of
/// children in `cmin..=cmax`, and stops as soon as `q` nodes exist. Labels
/// follow creation order.
pub fn galton_watson<R: Rng + ?Sized>(q: usize, cmin: usize, cmax: usize, rng: &mut R) -> RootedTree {
    let mut parent = vec![None];
    let mut head = 0;
    while parent.len() < q {
        let kids = rng.random_range(cmin..=cmax);
        for _ in 0..kids {
            if parent.len() == q {
                break;
            }
            parent.push(Some(head));
        }
        head += 1;
    }
    RootedTree::from_parents(parent).expect("breadth-first growth yields a tree")
}

pub fn normal_column<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<f64> {
    (0..q).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normal_matrix<R: Rng + ?Sized>(q: usize, p: usize, rng: &mut R) -> FrequencyMatrix {
    FrequencyMatrix::from_columns((0..p).map(|_| normal_column(q, rng)).collect())
        .expect("non-empty finite matrix")
}

/// A point drawn uniformly from the probability simplex (symmetric
/// Dirichlet with concentration 1).
pub fn dirichlet_simplex<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..q).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x: f64| x / total).collect()
}

/// `F = U M`: subtree sums of `m`.
pub fn subtree_sums(tree: &RootedTree, m: &[f64]) -> Vec<f64> {
    let mut f = m.to_vec();
    for &v in tree.preorder().iter().rev() {
        if let Some(p) = tree.parent(v) {
            f[p] += f[v];
        }
    }
    f
}

/// Noiseless data for `tree`: returns `U M` together with the simplex
/// columns of `M`.
pub fn feasible_matrix<R: Rng + ?Sized>(
    tree: &RootedTree,
    p: usize,
    rng: &mut R,
) -> (FrequencyMatrix, Vec<Vec<f64>>) {
    let ms: Vec<Vec<f64>> = (0..p).map(|_| dirichlet_simplex(tree.len(), rng)).collect();
    let cols = ms.iter().map(|m| subtree_sums(tree, m)).collect();
    (FrequencyMatrix::from_columns(cols).expect("finite"), ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::recover_solution;

    #[test]
    fn galton_watson_has_exact_size_and_bounded_fanout() {
        let mut rng = seeded(3);
        for q in [1, 2, 5, 100, 1000] {
            let t = galton_watson(q, 1, 4, &mut rng);
            assert_eq!(t.len(), q);
            assert!((0..q).all(|v| t.children(v).len() <= 4));
        }
        assert!(GaltonWatsonSpec::new(10, 0, 3, 1).is_err());
        assert!(GaltonWatsonSpec::new(10, 4, 3, 1).is_err());
        let spec = GaltonWatsonSpec::new(50, 2, 3, 9).unwrap();
        assert_eq!(spec.generate(), spec.generate());
    }

    #[test]
    fn simplex_draws() {
        let mut rng = seeded(1);
        let m = dirichlet_simplex(7, &mut rng);
        assert!(m.iter().all(|&x| x >= 0.0));
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subtree_sums_invert_recovery() {
        let mut rng = seeded(5);
        let tree = random_tree(9, &mut rng);
        let m = dirichlet_simplex(9, &mut rng);
        let f = subtree_sums(&tree, &m);
        // Z with F_i = Z_parent - Z_i: Z_i = -sum of F over ancestors-and-self
        let mut z = vec![0.0; 9];
        for &v in tree.preorder() {
            z[v] = tree.parent(v).map_or(0.0, |p| z[p]) - f[v];
        }
        let (m2, f2) = recover_solution(&tree, &z);
        for i in 0..9 {
            assert!((m[i] - m2[i]).abs() < 1e-12 && (f[i] - f2[i]).abs() < 1e-12);
        }
    }
}
