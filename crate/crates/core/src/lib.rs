//! Diffusion-based audio super-resolution: a conditional denoising network
//! that upsamples a band-limited waveform by an integer ratio.

pub mod diffusion;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Signal = dsp::AudioSignal<f64>;
pub type Signal32 = dsp::AudioSignal<f32>;
pub type Network = model::NuWaveNetwork<f64>;
pub type Network32 = model::NuWaveNetwork<f32>;
pub type Schedule = diffusion::NoiseSchedule<f64>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
