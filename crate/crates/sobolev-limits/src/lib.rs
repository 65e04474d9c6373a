//! Finite-stage bilipschitz maps on the cube `[-1,1]^n` whose limits are
//! non-injective Sobolev maps, together with the numerical probes used to
//! check them: seminorm quadrature, Jacobian surveys, boundary checks and
//! topological degree.
//!
//! Every stage map is a bijection of the closed cube with exact forward,
//! inverse and derivative evaluation. Points are `[f64; N]`.

// Negated comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cantor_map;
pub mod composite;
pub mod degree;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod log_magnitude;
pub mod rng;
pub mod stage_map;
pub mod tentacle;
pub mod tower;

pub use error::{Error, Result};
pub use geometry::{Address, Construction, CubeFamily, Location, ParameterSchedule, Zone};
pub use log_magnitude::LogMagnitude;
pub use stage_map::StageMap;

/// A point of `R^N`.
pub type Point<const N: usize> = [f64; N];

/// A square matrix, row-major: `m[i][j] = d f_i / d x_j`.
pub type Matrix<const N: usize> = [[f64; N]; N];
