use crate::diffusion::NoiseLevel;
use crate::scalar::Scalar;

use super::ModelConfig;

/// `[sin(10^(-i gamma) C s), cos(10^(-i gamma) C s)]` for `i = 0..dim/2`,
/// where `s` is the continuous noise level.
pub fn noise_level_embedding<T: Scalar>(level: NoiseLevel<T>, config: &ModelConfig) -> Vec<T> {
    let half = config.embedding_dim / 2;
    let scaled = T::lit(config.embedding_c) * level.get();
    let gamma = T::lit(config.embedding_gamma);
    let ten = T::lit(10.0);
    let args: Vec<T> = (0..half).map(|i| ten.powf(-T::from_usize_lossy(i) * gamma) * scaled).collect();
    args.iter().map(|a| a.sin()).chain(args.iter().map(|a| a.cos())).collect()
}
