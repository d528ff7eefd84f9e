//! Labeled RNG sub-streams derived from one root seed.
//!
//! Every random choice in the pipeline draws from a stream named by what it
//! is for (`"split"`, `"negsample"`, `"init"`, `"sa"`, ...), so one root seed
//! reproduces a whole run and reordering unrelated stages cannot perturb a
//! stream.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stable 64-bit label hash (FNV-1a).
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic RNG for `(root_seed, label)`.
pub fn substream(root_seed: u64, label: &str) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(label_hash(label));
    rng
}
