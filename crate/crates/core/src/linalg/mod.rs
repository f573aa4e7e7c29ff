//! Sparse storage, sparse Cholesky and symmetric-definite eigensolvers.

pub mod cholesky;
pub mod eigen;
pub mod sparse;

pub use cholesky::SparseCholesky;
pub use eigen::{
    fix_signs, generalized_eigen, lowest_eigenpairs, subspace_iteration, EigenPairs, SubspaceOptions, DENSE_LIMIT,
};
pub use sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("eigensolver did not converge (worst relative residual {residual:e})")]
    NoConvergence { residual: f64 },
}
