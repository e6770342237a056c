//! Seeded random streams.
//!
//! Every execution derives independent ChaCha8 streams from the scenario seed:
//! stream 0 belongs to the adversary, stream `i` to peer `i` (1-based), and
//! higher stream numbers are used by the harness (input generation, crash
//! plans). A stream key is `splitmix64(seed ^ splitmix64(stream))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INPUT_STREAM: u64 = 1 << 32;
pub const PLAN_STREAM: u64 = (1 << 32) + 1;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}
