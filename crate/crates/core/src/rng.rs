//! Counter-keyed random streams.
//!
//! Every random draw in a simulation is taken from a ChaCha stream selected by
//! `(master_seed, index, role)`, so results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes a stream can serve for one codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Message = 0,
    ChannelNoise = 1,
    CsiNoise = 2,
    Interleaver = 3,
    Shuffle = 4,
    Init = 5,
}

const ROLES: u64 = 8;

/// Returns the stream for `(master_seed, index, role)`.
pub fn stream(master_seed: u64, index: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index.wrapping_mul(ROLES).wrapping_add(role as u64));
    rng
}
