//! Signal pipeline around the network: STFT filtering, subsampling, silence
//! trimming, patching, the linear-interpolation baseline, synthetic audio,
//! and WAV I/O.

mod filter;
mod patch;
mod signal;
mod stft;
mod synth;
mod trim;
pub mod wav;

pub use filter::{downsample, linear_upsample, lowpass_filter, FILTER_HOP, FILTER_WINDOW};
pub use patch::{extract_patch, patch_length, PATCH_BASE};
pub use signal::AudioSignal;
pub use stft::{hann_window, istft, stft, StftFrameSet};
pub use synth::{synth_corpus, synth_signal, SynthSpec};
pub use trim::{trim_silence, TRIM_HOP, TRIM_THRESHOLD_DB, TRIM_WINDOW};
