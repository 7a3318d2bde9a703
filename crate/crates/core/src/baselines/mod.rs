//! Linear statistical shape models used as comparison points.

pub mod gaussian;
pub mod pca;

pub use gaussian::{fit_gaussian, jittered_cholesky, GaussianModel, JITTER_SCALE};
pub use pca::{
    pca_fit, sample_pca_decoupled, sample_pca_gaussian, subspace_distance,
    PcaModel, DEFAULT_MODES,
};
