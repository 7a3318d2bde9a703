//! Denoising diffusion priors over latent vectors: schedule, ε-network,
//! training, and guided ancestral sampling.

pub mod hierarchical;
pub mod net;
pub mod normalize;
pub mod observe;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use hierarchical::{
    sample_centerlines, sample_hierarchical, sample_radii, train_hierarchical, HierarchicalConfig, HierarchicalLogs,
    HierarchicalModel, PromptBundle,
};
pub use net::{CondInput, DenoiserNet, NetShape, Preconditioner};
pub use normalize::Normalizer;
pub use sampler::{
    cfg_score, sample, sample_traced, score_from_eps, Guidance, NoisePredictor, Observation, ObservationTerm,
    SamplerConfig, DEFAULT_SAMPLE_BATCH,
};
pub use schedule::{posterior_mean, NoiseSchedule, ScheduleSpec};
pub use train::{
    ddpm_loss, train, write_log_csv, Adam, DiffusionModel, EpochLoss, Precondition, TrainConfig, TrainOutcome,
};
