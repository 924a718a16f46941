//! Deterministic inputs shared by the benchmarks.

use fsoinet::{FsoiNet, ModelConfig, Tensor, VariantMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, 1.0, &mut rng)
}

/// A model small enough to benchmark but with every layer kind present.
pub fn small_model(mode: VariantMode) -> FsoiNet<f32> {
    let config = ModelConfig {
        block_side: 32,
        ratio: 0.25,
        channels: 8,
        phases: 4,
        mode,
    };
    FsoiNet::new(config, 0).expect("valid benchmark config")
}
