//! Regularized Wodzicki residues for SG-classical pseudodifferential symbols
//! on R^n, with two independent computation routes: the symbol/parametrix
//! route (Dirac operator) and the local heat-coefficient route (generalized
//! Laplacians).

pub mod dirac;
pub mod error;
pub mod fpint;
pub mod geometry;
pub mod jet;
pub mod laplacian;
pub mod jmat;
pub mod mat;
pub mod quad;
pub mod sgsym;

pub use error::{Result, SgError};
