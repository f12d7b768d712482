//! Stable 64-bit hashing used for fingerprints, MinHash permutations, and
//! seed derivation. Everything here is fixed for the lifetime of the on-disk
//! formats: fingerprints written by one build must match another.

use sha2::{Digest, Sha256};
use xxhash_rust::xxh3::xxh3_64_with_seed;

/// Finalizer of the splitmix64 generator. Bijective on `u64`, so distinct
/// inputs always produce distinct outputs.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable 64-bit content hash of a byte string.
#[inline]
pub fn hash_bytes(data: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(data, seed)
}

/// Stable 64-bit content hash of a string.
#[inline]
pub fn hash_str(s: &str, seed: u64) -> u64 {
    hash_bytes(s.as_bytes(), seed)
}

/// One of a family of 64-bit hash functions indexed by `index`, all derived
/// from `seed`. Used to realize MinHash permutations without storing
/// permutation tables.
#[inline]
pub fn indexed_hash(seed: u64, index: u64, value: u64) -> u64 {
    let key = splitmix64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    splitmix64(value ^ key)
}

/// Derive a subseed for a named component from a global seed, so reordering
/// components never silently correlates their randomness.
pub fn derive_subseed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// 128-bit content digest, hex encoded. Used for exact deduplication keys.
pub fn digest128_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}
