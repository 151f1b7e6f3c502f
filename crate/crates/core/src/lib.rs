//! Mixed finite element discretizations of the wave equation in composite
//! media made of elastic and viscoelastic (Zener model) parts.
//!
//! The stress is split into an elastic part `gamma` and, on viscoelastic
//! subdomains, a memory part `zeta`. Two space discretizations are provided:
//! a hybridized H(div)-conforming scheme with trapezoidal time stepping and
//! static condensation onto a facet trace, and a symmetric interior penalty
//! DG scheme with explicit centered time stepping.
//!
//! All numerical types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod assembly;
pub mod cg;
pub mod cli_io;
pub mod dg;
mod error;
pub mod fem_basis;
pub mod materials;
pub mod mesh;
pub mod scalar;
pub mod verification;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Mesh = mesh::Mesh<Real>;
pub type FacetTopology = mesh::FacetTopology<Real>;
pub type MaterialTable = materials::MaterialTable<Real>;
pub type FeSpace = assembly::FeSpace<Real>;
pub type CgSolver<'a> = cg::CgSolver<'a, Real>;
pub type DgSolver<'a> = dg::DgSolver<'a, Real>;
pub type ManufacturedCase = verification::ManufacturedCase<Real>;
