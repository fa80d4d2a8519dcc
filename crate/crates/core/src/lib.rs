//! Numerical toolkit for attractive delta interactions supported by
//! asymptotically straight planar curves.

pub mod error;
pub mod quadrature;
pub mod curve_geometry;
pub mod special_functions;
pub mod linalg;
pub mod kernel_ops;
pub mod rootfind;
pub mod spectrum;
pub mod lap;
pub mod quasimode;
pub mod wavechecks;
pub mod table;

pub use error::{Error, Result};
pub use table::format_float;
