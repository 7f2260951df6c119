//! Seed derivation and per-purpose random substreams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream so
//! that, e.g., the constrained-policy draws of a blended agent never shift the
//! online draws. This is what makes `σ = 1` reproduce plain CTS bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Online = 1,
    Constrained = 2,
    Explore = 3,
    Teaching = 4,
    Context = 5,
    Data = 6,
}

pub fn substream(seed: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a path of identifiers into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// The random streams one agent consumes during a run.
#[derive(Debug, Clone)]
pub struct AgentStreams {
    pub online: StreamRng,
    pub constrained: StreamRng,
    pub explore: StreamRng,
}

impl AgentStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            online: substream(seed, Purpose::Online),
            constrained: substream(seed, Purpose::Constrained),
            explore: substream(seed, Purpose::Explore),
        }
    }
}
