//! Numerical engines for entropic dynamics on a discretized configuration space.
//!
//! Fields live on a cell-centred grid ([`grid::ConfigSpace`]). The engines share
//! one set of constants ([`params::PhysicalParams`]):
//!
//! * [`kernel`]: exact maximum-entropy transition kernels and their audits.
//! * [`ensemble`]: Monte Carlo sampling of the short-step process.
//! * [`fokker_planck`]: deterministic density transport.
//! * [`manifold`]: the coupled density/phase Hamiltonian flow.
//! * [`schrodinger`]: linear and nonlinear wave-function reference solvers.

pub mod calculus;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod fokker_planck;
pub mod grid;
pub mod kernel;
pub mod manifold;
pub mod metrics;
pub mod params;
pub mod schrodinger;
pub mod states;

pub use error::{Error, Result};
pub use field::{ComplexField, ScalarField, VectorField, VectorPotential};
pub use grid::{Boundary, ConfigSpace};
pub use params::PhysicalParams;
