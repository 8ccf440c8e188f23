//! The four networks: shared-weight twin generator branches, the expert
//! regressor, the multiscale frame discriminator and the vector-quantized
//! autoencoder.

pub mod discriminator;
pub mod expert;
pub mod generator;
pub mod layers;
pub mod noise;
pub mod vq;

pub use discriminator::{DiscriminatorConfig, FrameDiscriminator};
pub use expert::{ExpertConfig, ExpertRegressor};
pub use generator::{
    twin_generate, EmbeddingGenerator, EmbeddingGeneratorConfig, TwinBranch, VideoGenerator,
    VideoGeneratorConfig,
};
pub use noise::{sample_noise, DEFAULT_NOISE_VARIANCE};
pub use vq::{VqAutoencoder, VqConfig, VqOutput};
