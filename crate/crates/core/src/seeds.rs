//! Deterministic seed derivation for independent RNG streams.
//!
//! Every stochastic stage (population init, trial sampling, input weights,
//! task data, controls) derives its own 64-bit seed from a base seed and a
//! stream index, so runs are reproducible and streams stay independent of
//! each other's draw counts.

/// SplitMix64 finalizer. Bijective on u64 with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` for stream `stream`, draw `index`.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ stream.wrapping_mul(0xa076_1d64_78bd_642f)) ^ index)
}

/// Stream tags, one per stochastic stage. Values are arbitrary but frozen:
/// changing them changes every derived stream.
pub mod stream {
    pub const POPULATION_INIT: u64 = 1;
    pub const TRIALS: u64 = 2;
    pub const INPUT_WEIGHTS: u64 = 3;
    pub const TASK_DATA: u64 = 4;
    pub const CONTROL: u64 = 5;
    pub const METRICS: u64 = 6;
    pub const RUN: u64 = 7;
}
