//! Minimum-contrast estimation for multivariate stationary spatial point
//! processes.
//!
//! The crate provides:
//!
//! * marginal and cross K-function estimation with several edge corrections
//!   ([`kfunc`]),
//! * a parametric bivariate log-Gaussian Cox process under a linear model of
//!   coregionalization, with analytic curve gradients ([`lgcp`]),
//! * the minimum-contrast objective over Hadamard-powered curve matrices
//!   ([`contrast`]) and a derivative-free fitter ([`fit`]),
//! * LGCP and Poisson simulation on rectangular windows ([`sim`]),
//! * Monte-Carlo sandwich covariance estimation and control-parameter
//!   selection by generalized variance ([`inference`]),
//! * the CSV/JSON file formats shared with the command-line front end
//!   ([`io`]).
//!
//! All numeric code is generic over the scalar type through [`Real`];
//! `f64` aliases for the main data types live at the crate root.

pub mod contrast;
pub mod curves;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kfunc;
pub mod lgcp;
pub mod matrix;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

/// Observation window with `f64` coordinates.
pub type Window = geometry::RectWindow<f64>;
/// Multitype point pattern with `f64` coordinates.
pub type Pattern = geometry::PointPattern<f64>;
/// Distance grid with `f64` nodes.
pub type Grid = curves::DistanceGrid<f64>;
/// Empirical curve matrix with `f64` values.
pub type Curves = curves::KCurveMatrix<f64>;
/// LGCP parameter set with `f64` entries.
pub type Params = lgcp::LgcpParams<f64>;
/// Contrast configuration with `f64` control parameters.
pub type Config = contrast::ContrastConfig<f64>;
