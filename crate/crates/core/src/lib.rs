//! Entanglement distillation from bipartite Fermionic quasifree states.
//!
//! States are covariance matrices on the Majorana reference space; protocol
//! quantities are Pfaffians of small real antisymmetric matrices, checked
//! against a dense Fock-space oracle for few modes and scaled to long free
//! Fermion chains through Toeplitz kernels.

pub mod closed_form;
pub mod error;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod protocol;
pub mod quasifree;
pub mod sampling;

pub use error::{Error, Result};
pub use lattice::{LanczosOptions, LatticeGeometry};
pub use protocol::{DistillationReport, OptimalChoice, ProtocolChoice};
pub use quasifree::{
    BasisProjection, BipartiteSplit, CovarianceFile, CovarianceMatrix, Orientation, ProtocolQuantities, RealProjection,
};
