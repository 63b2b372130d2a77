//! Wasserstein barycenters of random probability measures.
//!
//! Exact 1D barycenters through quantile averaging, closed forms for affine
//! deformation families, a free-support fixed-point solver for discrete
//! inputs in any dimension, Kantorovich dual certificates and a Monte Carlo
//! harness for the empirical barycenter's convergence rate.

pub mod barycenter;
pub mod cli;
pub mod duality;
pub mod error;
pub mod experiments;
pub mod measures;
pub mod models;
pub mod transport1d;
pub mod transport_exact;

pub use error::{Error, Result};
pub use measures::{
    AffineMap, DiscreteMeasure, DomainBox, GridDensity, GridGeometry, Measure, TransportPlan,
};
