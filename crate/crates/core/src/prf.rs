//! Keyed one-bit branch hash shared by the obfuscator and the trusted core.
//!
//! The function is a two-round splitmix64-finalizer chain over the branch
//! address and a 128-bit key. It is balanced and deterministic, which is all
//! the obfuscation contract needs, but it is not a cryptographic PRF; a real
//! deployment would swap in a keyed cryptographic hash with the same
//! signature.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::isa::{decode, IsaError, ProgramImage};

/// 128-bit program key, the only secret in the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ProgramKey {
    pub hi: u64,
    pub lo: u64,
}

impl ProgramKey {
    pub const fn new(hi: u64, lo: u64) -> Self {
        ProgramKey { hi, lo }
    }

    pub fn from_u128(v: u128) -> Self {
        ProgramKey { hi: (v >> 64) as u64, lo: v as u64 }
    }

    pub fn as_u128(self) -> u128 {
        (self.hi as u128) << 64 | self.lo as u128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("key must be exactly 32 hex digits, got `{0}`")]
pub struct KeyParseError(pub String);

impl FromStr for ProgramKey {
    type Err = KeyParseError;

    /// 32 hex digits, most significant first.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(KeyParseError(s.to_string()));
        }
        let v = u128::from_str_radix(s, 16).map_err(|_| KeyParseError(s.to_string()))?;
        Ok(ProgramKey::from_u128(v))
    }
}

impl fmt::Display for ProgramKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}{:016x}", self.hi, self.lo)
    }
}

/// Hash unit latency in cycles (at least one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashSpec {
    latency: u32,
}

impl HashSpec {
    pub fn new(latency: u32) -> Option<Self> {
        (latency >= 1).then_some(HashSpec { latency })
    }

    pub fn latency(self) -> u32 {
        self.latency
    }
}

impl Default for HashSpec {
    fn default() -> Self {
        HashSpec { latency: 16 }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The keyed bit for the instruction at `addr`.
pub fn hash_bit(key: ProgramKey, addr: u32) -> bool {
    let s1 = mix(key.lo ^ addr as u64 ^ GOLDEN_GAMMA);
    let s2 = mix(s1 ^ key.hi);
    s2 & 1 == 1
}

/// Addresses of the conditional branches whose hash bit is set.
pub fn flip_set(key: ProgramKey, img: &ProgramImage) -> Result<BTreeSet<u32>, (u32, IsaError)> {
    let mut set = BTreeSet::new();
    for (addr, word) in img.words() {
        let instr = decode(word).map_err(|e| (addr, e))?;
        if instr.is_branch() && hash_bit(key, addr) {
            set.insert(addr);
        }
    }
    Ok(set)
}
