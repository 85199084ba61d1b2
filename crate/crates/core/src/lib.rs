//! Numerical laboratory for a boundary-weighted multiplicative chaos measure
//! on rectangles in the closed upper half-plane.
//!
//! The measure under study is the renormalized exponential of a log-correlated
//! Gaussian field whose covariance carries a boundary-reflection term,
//! weighted by `Im(z)^{-gamma^2/2}`. The crate builds the regularized field on
//! uniform grids, samples it exactly through dense Cholesky factorization, and
//! measures scaling exponents, moment growth, decorrelation across separated
//! boxes, and tail behavior against closed-form predictions.
//!
//! Module map:
//! - [`geometry`]: rectangles, Carleson cubes, Whitney-type decompositions.
//! - [`kernel`]: covariance kernel, grid discretization, dense factorization.
//! - [`sampler`]: reproducible Gaussian field samples from a factorization.
//! - [`gmc`]: renormalized exponential masses in the log domain.
//! - [`moments`]: moment estimators, scaling checks, divergence scans, tails.
//! - [`inequalities`]: exact comparison and convexity checks used by the
//!   moment arguments, verified symbolically and by quadrature.
//! - [`report`]: JSON summaries and CSV emission with stable formatting.
//! - [`suite`]: end-to-end verification scenarios shared by tests and the CLI.

pub mod geometry;
pub mod gmc;
pub mod inequalities;
pub mod kernel;
pub mod moments;
pub mod report;
pub mod sampler;
pub mod suite;

pub use geometry::{CarlesonCube, RegionSpec, UHPRect, WhitneySplit};
pub use gmc::{GmcParams, MassResult};
pub use inequalities::{ComparisonResult, GaussianVectorSpec};
pub use kernel::{CovarianceSpec, FactorizedCovariance, GridDiscretization};
pub use moments::{MomentEstimate, TailIndexEstimate};
pub use sampler::FieldSample;
