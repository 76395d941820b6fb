//! Covariance estimation and eigenanalysis: the empirical kernel, its
//! quadrature-weighted eigenproblem (directly or through the temporal Gram
//! matrix) and per-axis separable estimates for volume data.

mod eigen;
mod separable;

pub use eigen::{
    eigendecompose, eigendecompose_gram, empirical_covariance, principal_components, CovarianceKernel,
    EigenSystem, RANK_TOLERANCE,
};
pub use separable::{separable_covariance, SeparableEigenSystem};
