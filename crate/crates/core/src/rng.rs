//! Deterministic random streams.
//!
//! Every consumer draws from its own ChaCha stream keyed by the base seed, a
//! purpose tag and an index (class id, step, run), so results never depend on
//! the order in which workers run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Init = 2,
    Batch = 3,
    Shared = 4,
    Discretize = 5,
    Train = 6,
    Select = 7,
    Diagnostic = 8,
    Theta = 9,
    Noise = 10,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
