//! Projection-based intrinsic conditional autoregression (PICAR) for
//! hierarchical spatial models.
//!
//! The pipeline is: build a triangular [`mesh`] over the observation
//! locations, take the leading eigenvectors of the Moran's operator on the
//! mesh graph as a spatial [`basis`], project them onto the locations, pick a
//! rank with the [`glm`] cross-validation screen, and sample the posterior
//! with [`mcmc`]. [`randfield`] generates synthetic studies and [`eval`]
//! scores predictions.

pub mod basis;
pub mod error;
pub mod eval;
pub mod glm;
pub mod link;
pub mod mcmc;
pub mod mesh;
pub mod pipeline;
pub mod randfield;
pub mod study;

pub use error::{PicarError, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
