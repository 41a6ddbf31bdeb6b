//! Seed derivation for reproducible substreams.
//!
//! Every sampling site derives its own ChaCha stream from a tuple of
//! integers (run seed, step, completion index, ...), so parallel and
//! serial execution visit identical random sequences.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over a byte slice. Stable across platforms and releases,
/// unlike `DefaultHasher`.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mix a tuple of integers into a single substream seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(parts.len() * 8);
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fnv64(&bytes)
}

/// Seeded stream for the given derivation path.
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
