//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator. Streams are
//! derived from one root seed and a purpose tag: the generator is seeded with
//! `root ^ fnv1a64(tag)`, so two subsystems using different tags never share a
//! sequence and each one can be reproduced in isolation. Per-replication
//! streams additionally select the ChaCha stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TAG_ENV: &str = "env";
pub const TAG_EXPLORE: &str = "explore";
pub const TAG_REPLAY: &str = "replay";
pub const TAG_INIT: &str = "init";
pub const TAG_EVAL: &str = "eval";
pub const TAG_POLICY: &str = "policy";
pub const TAG_POOL: &str = "pool";
pub const TAG_ORACLE: &str = "oracle";

pub fn fnv1a64(tag: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in tag.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn stream(root: u64, tag: &str) -> Rng {
    Rng::seed_from_u64(root ^ fnv1a64(tag))
}

/// Independent stream for replication `index` under `tag`.
pub fn replication_stream(root: u64, tag: &str, index: u64) -> Rng {
    let mut rng = stream(root, tag);
    rng.set_stream(index);
    rng
}
