//! Named, reproducible RNG sub-streams.
//!
//! Every random process in the emulator draws from a ChaCha8 stream keyed by
//! `(global seed, stream name, object id)`. Adding or removing one vehicle
//! never shifts the numbers another vehicle sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream used by the synthetic scenario generator.
pub const STREAM_SCENARIO: &str = "scenario";
/// Per-link shadowing streams (keyed by target id).
pub const STREAM_SHADOWING: &str = "shadowing";
/// Per-node GNSS error streams for remote senders.
pub const STREAM_GNSS: &str = "gnss";
/// GNSS error stream for the ego's own fix.
pub const STREAM_GNSS_EGO: &str = "gnss-ego";

/// Derive the RNG for `(seed, stream, key)`.
pub fn substream(seed: u64, stream: &str, key: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((stream.len() as u64).to_le_bytes());
    hasher.update(stream.as_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
