//! Keyed branch reversal over laid-out images, the mask sidecar for the
//! mask-based core, and a static pairing check between original and
//! obfuscated images.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::isa::{complement_branch, decode, encode, Instruction, ProgramImage};
use crate::prf::{hash_bit, ProgramKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObfError {
    #[error("unsupported instruction {word:#010x} at {addr:#010x}")]
    UnsupportedInstruction { addr: u32, word: u32 },
    #[error("images differ in shape (base, length, data or entry)")]
    ShapeMismatch,
    #[error("mask bit set at {addr:#010x}, which is not a conditional branch")]
    MaskBitOnNonBranch { addr: u32 },
    #[error("mask covers {mask_words} words at {mask_base:#010x}, image has {image_words} at {image_base:#010x}")]
    MaskShape { mask_base: u32, mask_words: usize, image_base: u32, image_words: usize },
    #[error("malformed mask file: {0}")]
    Format(String),
}

fn decode_at(addr: u32, word: u32) -> Result<Instruction, ObfError> {
    decode(word).map_err(|_| ObfError::UnsupportedInstruction { addr, word })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObfuscationReport {
    pub total_branches: usize,
    pub flipped: usize,
    pub flipped_addresses: Vec<u32>,
    pub key_fingerprint: String,
}

impl fmt::Display for ObfuscationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "key_fingerprint={}", self.key_fingerprint)?;
        writeln!(f, "total_branches={}", self.total_branches)?;
        writeln!(f, "flipped={}", self.flipped)?;
        let addrs: Vec<String> = self.flipped_addresses.iter().map(|a| format!("{a:08x}")).collect();
        writeln!(f, "flipped_addresses={}", addrs.join(","))
    }
}

/// First eight hex digits of SHA-256 over the big-endian key bytes. Safe to log.
pub fn key_fingerprint(key: ProgramKey) -> String {
    let digest = Sha256::digest(key.as_u128().to_be_bytes());
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

/// Reverses every conditional branch whose keyed hash bit is 1. Layout,
/// data and entry are untouched.
pub fn obfuscate_image(img: &ProgramImage, key: ProgramKey) -> Result<(ProgramImage, ObfuscationReport), ObfError> {
    let mut code = Vec::with_capacity(img.code().len());
    let mut total_branches = 0;
    let mut flipped_addresses = Vec::new();
    for (addr, word) in img.words() {
        let instr = decode_at(addr, word)?;
        if !instr.is_branch() {
            code.push(word);
            continue;
        }
        total_branches += 1;
        if hash_bit(key, addr) {
            let reversed = complement_branch(&instr).expect("branch");
            code.push(encode(&reversed).expect("complement keeps fields encodable"));
            flipped_addresses.push(addr);
        } else {
            code.push(word);
        }
    }
    let report = ObfuscationReport {
        total_branches,
        flipped: flipped_addresses.len(),
        flipped_addresses,
        key_fingerprint: key_fingerprint(key),
    };
    Ok((img.with_code(code), report))
}

/// One reversal bit per code word; set bits may only sit on branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskStream {
    base: u32,
    bits: Vec<bool>,
}

impl MaskStream {
    /// Builds a mask for `img`, rejecting set bits on non-branch words.
    pub fn new(img: &ProgramImage, bits: Vec<bool>) -> Result<Self, ObfError> {
        let mask = MaskStream { base: img.base(), bits };
        mask.validate(img)?;
        Ok(mask)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bit for the word at `addr`; `false` outside the covered range.
    pub fn bit_at(&self, addr: u32) -> bool {
        let Some(off) = addr.checked_sub(self.base) else { return false };
        off % 4 == 0 && self.bits.get((off / 4) as usize).copied().unwrap_or(false)
    }

    /// Checks shape against `img` and that set bits only mark branches.
    /// Complemented branches are still branches, so either image of a pair
    /// validates the same way.
    pub fn validate(&self, img: &ProgramImage) -> Result<(), ObfError> {
        if self.base != img.base() || self.bits.len() != img.code().len() {
            return Err(ObfError::MaskShape {
                mask_base: self.base,
                mask_words: self.bits.len(),
                image_base: img.base(),
                image_words: img.code().len(),
            });
        }
        for ((addr, word), &bit) in img.words().zip(&self.bits) {
            if bit && !decode(word).is_ok_and(|i| i.is_branch()) {
                return Err(ObfError::MaskBitOnNonBranch { addr });
            }
        }
        Ok(())
    }

    /// `.mask` sidecar text. Bits are packed eight words per byte, most
    /// significant bit first (lowest address), zero padded.
    pub fn to_file_string(&self) -> String {
        let mut hex = String::with_capacity(self.bits.len() / 4 + 2);
        for chunk in self.bits.chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b as u8) << (7 - i));
            hex.push_str(&format!("{byte:02x}"));
        }
        format!("RVMASK v1\nbase {:08x}\nwords {}\nbits {hex}\nencrypted: none\n", self.base, self.bits.len())
    }

    /// Parses a `.mask` file; the result still needs [`MaskStream::validate`]
    /// against the image it will run with.
    pub fn from_file_str(text: &str) -> Result<Self, ObfError> {
        let bad = |msg: &str| ObfError::Format(msg.to_string());
        let mut lines = text.lines();
        match lines.next() {
            Some("RVMASK v1") => {}
            Some(l) if l.starts_with("RVMASK ") => return Err(bad("unsupported mask version")),
            _ => return Err(bad("missing `RVMASK v1` header")),
        }
        let mut field = |name: &str| -> Result<String, ObfError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(name)
                .map(str::to_string)
                .ok_or_else(|| ObfError::Format(format!("expected `{name}`, got `{line}`")))
        };
        let base_hex = field("base ")?;
        if base_hex.len() != 8 {
            return Err(bad("base must be 8 hex digits"));
        }
        let base = u32::from_str_radix(&base_hex, 16).map_err(|_| bad("bad base"))?;
        let words: usize = field("words ")?.parse().map_err(|_| bad("bad word count"))?;
        let hex = field("bits ")?;
        if field("encrypted: ")? != "none" {
            return Err(bad("encrypted masks are not supported"));
        }
        if hex.len() != words.div_ceil(8) * 2 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad("bit string length does not match word count"));
        }
        let mut bits = Vec::with_capacity(words);
        for i in 0..hex.len() / 2 {
            let byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad("bad hex"))?;
            for j in 0..8 {
                let bit = byte >> (7 - j) & 1 == 1;
                if 8 * i + j < words {
                    bits.push(bit);
                } else if bit {
                    return Err(bad("non-zero padding bits"));
                }
            }
        }
        Ok(MaskStream { base, bits })
    }
}

/// Mask marking exactly the branches that `obfuscate_image` reverses under
/// `key`. Ships alongside the obfuscated image.
pub fn make_mask(original: &ProgramImage, key: ProgramKey) -> Result<MaskStream, ObfError> {
    let bits = original
        .words()
        .map(|(addr, word)| Ok(decode_at(addr, word)?.is_branch() && hash_bit(key, addr)))
        .collect::<Result<Vec<bool>, ObfError>>()?;
    Ok(MaskStream { base: original.base(), bits })
}

/// First address where `obf` is not the keyed obfuscation of `original`.
pub fn first_pairing_mismatch(
    original: &ProgramImage,
    obf: &ProgramImage,
    key: ProgramKey,
) -> Result<Option<u32>, ObfError> {
    if original.base() != obf.base()
        || original.code().len() != obf.code().len()
        || original.entry() != obf.entry()
        || original.data_base() != obf.data_base()
        || original.data() != obf.data()
    {
        return Err(ObfError::ShapeMismatch);
    }
    for ((addr, orig_word), (_, obf_word)) in original.words().zip(obf.words()) {
        let instr = decode_at(addr, orig_word)?;
        let expected = if instr.is_branch() && hash_bit(key, addr) {
            encode(&complement_branch(&instr).expect("branch")).expect("encodable")
        } else {
            orig_word
        };
        if obf_word != expected {
            return Ok(Some(addr));
        }
    }
    Ok(None)
}

/// True iff `obf` is exactly `original` with the keyed branches reversed.
pub fn verify_pairing(original: &ProgramImage, obf: &ProgramImage, key: ProgramKey) -> Result<bool, ObfError> {
    first_pairing_mismatch(original, obf, key).map(|m| m.is_none())
}
