//! Seeded client sampling.
//!
//! Every run owns a ChaCha8 generator seeded from the run seed. Round `i` uses
//! stream `i` of that generator, so rounds draw from disjoint, reproducible
//! streams and the draws in one round never shift the draws in another.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generator for one protocol round.
pub fn round_rng(seed: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    rng
}

/// `m` distinct user indices from `0..n`, each `m`-subset equally likely.
pub fn sample_users<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "batch size {m} exceeds population {n}"
        )));
    }
    Ok(index::sample(rng, n, m).into_vec())
}
