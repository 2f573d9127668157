//! Noise schedules, the forward diffusion closed form, the reverse sampler,
//! and the training step.

mod process;
mod schedule;
mod train;

pub use process::{diffuse, reverse_step, sample, sample_noise_level, NoiseEstimator};
pub use schedule::{NoiseLevel, NoiseSchedule, SchedulePreset, FINAL_LEVEL_LIMIT};
pub use train::{log_l1_loss, loss, objective_and_grad, train_step, Example, StepReport, LOSS_FLOOR};
