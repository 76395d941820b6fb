//! Functional observations on discrete grids: quadrature, centering and
//! polynomial detrending.

mod detrend;
mod grid;

pub use detrend::{detrend_columns, detrend_polynomial, orthonormal_polynomial_design};
pub use grid::{demean, inner_product, sample_mean, FunctionalSample, GridDomain, GridKind, VolumeSeries};
