//! Platform- and toolchain-stable hashing and seed derivation.
//!
//! `std`'s `DefaultHasher` is not guaranteed stable across Rust releases, and
//! every artifact this crate writes must be byte-identical across runs and
//! machines, so all content hashing goes through FNV-1a plus a SplitMix64
//! finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer; spreads FNV output over all 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Incremental stable hasher. Fields are length-delimited so that
/// `("ab", "c")` and `("a", "bc")` hash differently.
#[derive(Clone, Debug)]
pub struct StableHasher {
    state: u64,
}

impl Default for StableHasher {
    fn default() -> Self {
        Self { state: FNV_OFFSET }
    }
}

impl StableHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.state ^= u64::from(b);
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
        self
    }

    pub fn write_str(&mut self, s: &str) -> &mut Self {
        self.write_u64(s.len() as u64);
        self.write_bytes(s.as_bytes())
    }

    pub fn write_u64(&mut self, v: u64) -> &mut Self {
        self.write_bytes(&v.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        mix64(self.state)
    }
}

/// Hash of a sequence of string fields.
pub fn hash_strs(parts: &[&str]) -> u64 {
    let mut h = StableHasher::new();
    for p in parts {
        h.write_str(p);
    }
    h.finish()
}

/// Hash of a sequence of integers.
pub fn hash_u64s(parts: &[u64]) -> u64 {
    let mut h = StableHasher::new();
    for &p in parts {
        h.write_u64(p);
    }
    h.finish()
}

/// Child seed for stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(base ^ mix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Portable seeded generator for `(base, stream)`.
pub fn rng_for(base: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng
}

/// Hex-encoded SHA-256 of `bytes`; used for shard and manifest digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
