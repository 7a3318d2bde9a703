//! Vascular shape synthesis: NURBS tube encoding, hierarchical diffusion
//! priors with prompt-guided posterior sampling, PCA baselines, and cohort
//! analytics.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the working precision used by the cohort tools,
//! the service and the CLI.

pub mod baselines;
pub mod cohort;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod linalg;
pub mod scalar;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use scalar::{KnotScalar, Scalar};

/// Working precision for geometry and fitting.
pub type Real = f64;

pub type Point = geometry::Vec3<Real>;
pub type ControlPolygon = geometry::ControlPolygon<Real>;
pub type RadialProfile = geometry::RadialProfile<Real>;
pub type VesselSkeleton = geometry::VesselSkeleton<Real>;
pub type SurfaceControlGrid = geometry::SurfaceControlGrid<Real>;
pub type VesselLatent = geometry::VesselLatent<Real>;
pub type QuadMesh = geometry::QuadMesh<Real>;
