//! Reproducible random-number streams for parallel Monte Carlo.
//!
//! Every trajectory gets its own ChaCha stream derived from (seed, index),
//! so ensembles are bit-identical under any parallel schedule or worker
//! count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform variate strictly inside (0, 1).
pub fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}
