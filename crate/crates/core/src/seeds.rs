//! Hierarchical seed derivation: master -> named stage -> cell index.
//!
//! Derivation is a pure mix of the master seed, the stage name, and the
//! cell index, so independent cells can run in any order or thread layout
//! and still draw identical streams.

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64; // FNV-1a
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed for stage `stage`, cell `index`, under `master`.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    mix(master ^ mix(hash_str(stage).wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15))))
}
