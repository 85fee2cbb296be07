//! Asymptotic eigenstructure of spiked sample correlation matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`laws`]: Marchenko–Pastur and companion laws, Stieltjes transform, spike maps.
//! * [`model`]: population models (correlation matrix, eigenstructure, data distribution).
//! * [`cumulants`]: order-4 moment/cumulant tensors and their contractions.
//! * [`asymptotics`]: limits and CLT variances/covariances for spike eigenvalues and eigenvectors.
//! * [`sampling`]: data generation, sample spectra and the `K(t)` diagnostic.
//! * [`montecarlo`]: replicate experiments compared against the asymptotic predictions.
//! * [`suite`]: bundled verification suites shared by the CLI and the acceptance tests.

pub mod asymptotics;
pub mod cumulants;
pub mod error;
pub mod laws;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod sampling;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};

/// Version tag embedded in every serialized report.
pub const SCHEMA_VERSION: u32 = 1;
