//! Seed splitting: sample `i` of a run seeded with `s` always draws from the
//! same ChaCha stream, whatever thread evaluates it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
