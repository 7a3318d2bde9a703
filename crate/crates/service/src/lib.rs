//! Session service for interactive, prompt-guided vessel generation.
//!
//! A session fixes a branch and collects prompts; each job samples a
//! hierarchical ensemble under the session's current prompts and stores an
//! immutable [`summary::EnsembleSummary`] with per-section uncertainty.

pub mod api;
pub mod error;
pub mod prompt;
pub mod state;
pub mod store;
pub mod summary;

pub use api::router;
pub use state::{App, JobRecord, JobRequest, JobStatus, ModelRegistry};
pub use store::Store;

/// Environment variable naming the model directory.
pub const MODEL_DIR_ENV: &str = "VESSELGEN_MODEL_DIR";
