//! The noise-estimation network, its configuration, and checkpoint files.

mod checkpoint;
mod config;
mod embedding;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use embedding::noise_level_embedding;
pub use network::{receptive_field, NuWaveNetwork, ParamLayout};
