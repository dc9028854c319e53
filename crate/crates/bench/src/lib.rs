//! Shared fixtures for the benchmarks.

use hypgcn_core::prune::hybrid_prune;
use hypgcn_core::rfc::BankVector;
use hypgcn_core::{FixedQ8p8, Model, ModelConfig, PruneSpec, PrunedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw banks whose lanes are positive with probability `density`.
pub fn random_banks(n: usize, density: f64, seed: u64) -> Vec<BankVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            std::array::from_fn(|_| {
                let mag = rng.random_range(1..2048);
                FixedQ8p8::from_raw(if rng.random_bool(density) { mag } else { -mag })
            })
        })
        .collect()
}

/// Four-block model of 32 and 64 channels over `frames` frames, pruned at
/// `rate` with the cav-70-1 pattern.
pub fn pruned_model(frames: usize, rate: f64) -> PrunedModel {
    let cfg = ModelConfig::micro(3, &[32, 32, 64, 64], &[1, 1, 2, 1], frames);
    let model = Model::synthesize(cfg, 1).expect("valid config");
    hybrid_prune(&model, &PruneSpec::uniform(4, rate, "cav-70-1")).expect("valid spec")
}
