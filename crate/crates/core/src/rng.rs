//! Deterministic random streams.
//!
//! Every run owns one ChaCha8 stream selected by `(master seed, run index)`,
//! so sweeps reproduce regardless of the order runs execute in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub fn stream_rng(master_seed: u64, run_index: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}
