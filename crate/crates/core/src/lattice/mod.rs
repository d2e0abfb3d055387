//! Free Fermions hopping on a chain: Toeplitz kernels, partial SVD and the
//! protocol evaluated on two separated blocks.

pub mod fit;
pub mod kernel;
pub mod lanczos;
pub mod pipeline;

pub use fit::{fit_power_law, min_length, MinLength, PowerLawFit};
pub use kernel::{correlation, kernel, ToeplitzKernel};
pub use lanczos::{top_singular_triplets, PartialSvd, SingularTriplet};
pub use pipeline::{
    dense_covariance, dense_lattice_point, lattice_min_length, lattice_point, restricted_covariance, sweep, write_sweep_csv,
    LanczosOptions, LatticeGeometry, LatticePoint, RestrictedLattice, SweepOptions, SweepRow,
};
