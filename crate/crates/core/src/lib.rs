//! Exact Euclidean projection of mutation-frequency data onto the perfect
//! phylogeny model of a given tree, iterative baselines for the same
//! problem, and exhaustive search over all labeled trees.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod generate;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod projection;
pub mod search;
pub mod tree;

pub use error::{PpmError, Result};
pub use matrix::FrequencyMatrix;
pub use projection::{
    project, project_incremental, project_matrix, project_matrix_incremental, MatrixProjection,
    ProjectionResult,
};
pub use tree::{ancestor_sums, count_trees, decode_prufer, encode_prufer, PruferCode, RootedTree};
