//! Seed derivation. Every realization and every purpose within it gets its own ChaCha stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `q` under `master`.
pub fn realization_seed(master: u64, q: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(q.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Purposes for which a realization draws randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    CommChannel,
    Rcs,
    Symbols,
    Init,
    EchoNoise,
    Pilots,
    AdversaryNoise,
    Vote,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::CommChannel => 1,
            Stream::Rcs => 2,
            Stream::Symbols => 3,
            Stream::Init => 4,
            Stream::EchoNoise => 5,
            Stream::Pilots => 6,
            Stream::AdversaryNoise => 7,
            Stream::Vote => 8,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    stream_with(seed, which, 0)
}

/// Sub-stream `index` of a purpose, e.g. one per transmit AP or per voting configuration.
pub fn stream_with(seed: u64, which: Stream, index: u64) -> SimRng {
    let s = splitmix64(seed ^ splitmix64(which.tag() << 32 | (index & 0xFFFF_FFFF)));
    ChaCha8Rng::seed_from_u64(s)
}
