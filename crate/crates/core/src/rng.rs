//! Portable seeded randomness: xoshiro256++ seeded through splitmix64.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type PortableRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Generator for a 64-bit seed. `seed_from_u64` expands the seed with
/// splitmix64, so neighbouring seeds give unrelated streams.
pub fn seeded(seed: u64) -> PortableRng {
    PortableRng::seed_from_u64(seed)
}

/// Independent stream for `(seed, index)`, e.g. one per image or per task.
pub fn substream(seed: u64, index: u64) -> PortableRng {
    seeded(seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Uniform draw in `[lo, hi)`; returns exactly `lo` when the interval is
/// degenerate. Always consumes one value so streams stay aligned.
#[inline]
pub fn uniform(rng: &mut PortableRng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}
