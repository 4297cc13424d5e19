//! Seeded random streams. One run seed fans out into independent ChaCha
//! streams, and per-vehicle substreams below those, so that switching e.g.
//! OMA to NOMA reception does not shift the fading, selection or policy
//! draws of any vehicle in a paired run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Fading = 2,
    Shadowing = 3,
    Selection = 4,
    Keep = 5,
    Traffic = 6,
    Policy = 7,
    Agent = 8,
    Replay = 9,
    Noise = 10,
    Genetic = 11,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream `which` of `seed`, split further by `index` (typically a vehicle).
pub fn substream(seed: u64, which: Stream, index: usize) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which as u64) << 32) | index as u64);
    rng
}

pub fn substreams(seed: u64, which: Stream, n: usize) -> Vec<SimRng> {
    (0..n).map(|i| substream(seed, which, i)).collect()
}
