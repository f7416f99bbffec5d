//! Seeding. All randomness in the crate flows through [`Rng`] so that a run is
//! a pure function of its seeds.

use rand::SeedableRng;

/// The generator used everywhere: ChaCha8, portable and reproducible.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Seed of ensemble member `index` under a master seed (`master ⊕ index`).
pub fn member_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

/// Independent stream `stream` of the generator keyed by `seed`.
///
/// Used for Monte-Carlo trials: trial `i` always draws from stream `i`, so
/// results do not depend on the order trials are scheduled in.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
