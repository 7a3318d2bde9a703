//! Chamfer metric, latent gradients and radial-profile encoding.

pub mod chamfer;
pub mod encode;
pub mod pullback;

pub use chamfer::{chamfer, chamfer_grad, directed_chamfer_grad, ChamferReport};
pub use encode::{fit_radial_profile, FitConfig, FitOutcome, FitReport};
pub use pullback::{chamfer_objective, pullback, LatentGradient};
