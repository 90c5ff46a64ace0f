//! Seeded counter-based generators, split into independent streams by role.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers; each role draws from its own ChaCha stream of the
/// replicate seed, so changing one consumer never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitialLabels,
    Dynamics,
    Sampling,
    Reference,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::InitialLabels => 1,
            Stream::Dynamics => 2,
            Stream::Sampling => 3,
            Stream::Reference => 4,
            Stream::Custom(k) => 1000 + k,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
