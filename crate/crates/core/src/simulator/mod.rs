//! Two-pool thermal plant used as ground truth for the identification
//! pipeline: heat balance, PI control, disturbances, sensor faults and the
//! abnormal-operation scenarios.

mod config;
mod controller;
mod episode;
mod plant;
mod scenario;
mod suite;

pub use config::*;
pub use controller::pi_valve;
pub use episode::{run_episode, EpisodeOptions};
pub use plant::*;
pub use scenario::*;
pub use suite::{generate_benchmark_suite, split_by_month, BenchmarkSuite, SuiteConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation guard violated: {detail}")]
    Guard { detail: String, state: Box<PlantState> },
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Seed of an independent stream for `(seed, label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}
