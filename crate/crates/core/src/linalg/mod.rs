//! Dense linear algebra: matrices, SVD, symmetric eigendecomposition, linear
//! solves, norms, Kronecker/vec identities and Procrustes alignment.

mod eigen;
pub(crate) mod factor;
mod matrix;
mod ops;
mod solve;
pub mod svd;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use factor::{orthonormality_defect, OrthonormalFactor, ORTHONORMAL_TOL};
pub use matrix::{DenseMatrix, MaskedMatrix};
pub use ops::{
    factor_incoherence, incoherence, kron, norm_fro, norm_max, norm_op, norm_two_to_inf,
    procrustes_align, sign_matrix, unvec, vec, Alignment,
};
pub use solve::{cholesky, inverse, solve};
pub use svd::{orthonormalize, rank_d_svd, singular_values, svd, truncate_rank, SvdTriple};
