//! Named, seeded random-number streams.
//!
//! Every source of randomness in a run is drawn from its own stream so that
//! components can be tested in isolation and reruns are byte-identical.
//! A stream is identified by `(master seed, label, index)`; the index is used
//! to pre-split substreams (per evaluation checkpoint, per eval-state).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_ENV_INIT: &str = "env-init";
pub const STREAM_STATE: &str = "state-sample";
pub const STREAM_REWARD: &str = "reward-noise";
pub const STREAM_AGENT_INIT: &str = "agent-init";
pub const STREAM_ACTION: &str = "action-sample";
pub const STREAM_EVAL: &str = "eval";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, label, index)`. Stable across platforms.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// Opens the named stream. ChaCha8 keeps the byte sequence identical on every
/// platform, which the reproducibility contract relies on.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}

/// Samples an index from a probability vector using a single uniform draw.
///
/// The vector is assumed to lie on the simplex; any trailing rounding slack
/// is absorbed by the final index.
pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}
