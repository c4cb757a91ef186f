//! Numerical kernel for Damek-Ricci spaces: generalized Heisenberg algebras
//! from Clifford-module data, the solvable extension and its left-invariant
//! geometry, closed-form Busemann functions and their Hessians, and a
//! finite-difference harness that checks the closed forms.

pub mod algebra;
pub mod busemann;
pub mod cli;
pub mod error;
pub mod group;
pub mod hessian;
pub mod linalg;
pub mod oracle;
pub mod verify;

pub(crate) mod serde_vec;

pub use algebra::{make_algebra, AlgebraDescriptor, GeneralizedHeisenbergAlgebra, VVector, ZVector};
pub use busemann::{BoundaryPoint, BusemannState, HessianCase};
pub use error::{Error, Result};
pub use group::{FrameVector, GroupPoint};
pub use hessian::{BasisTag, HessianMatrix};
pub use oracle::FdConfig;
