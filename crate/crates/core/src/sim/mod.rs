//! Cycle-level model of a 7-stage in-order RV32I core
//! (IF1 IF2 ID EX MA1 MA2 WB) in four variants:
//!
//! * **Baseline**: commodity core; branch outcomes are used as encoded.
//! * **StalledHash**: the keyed hash of each conditional branch's address
//!   starts when the branch enters ID and takes `L` cycles; the branch waits
//!   in EX for it and its outcome is XOR-ed with the bit.
//! * **CachedHash**: StalledHash plus a direct-mapped cache of computed bits,
//!   probed at ID entry; a hit costs nothing, a miss behaves as StalledHash
//!   and fills the line when the hash completes.
//! * **MaskBased**: the reversal bit comes from a per-word mask stream, with
//!   baseline timing.
//!
//! Timing rules: predict not-taken, control transfers resolve at the end of
//! EX and flush IF1/IF2/ID (3 cycles); ALU results forward EX to EX; load
//! results are ready after MA2, so a consumer right behind a load waits two
//! cycles in ID and one two behind waits one.

mod cache;
mod machine;
mod pipeline;

use std::fmt;

use thiserror::Error;

use crate::isa::ProgramImage;
use crate::obfuscate::{MaskStream, ObfError};
use crate::prf::{HashSpec, ProgramKey};

pub use cache::HashCache;
pub use machine::{Executed, MachineState, Memory, ECALL_EXIT, ECALL_PUTCHAR, STACK_SIZE, STACK_TOP};
pub use pipeline::{Pipeline, Stage, StageView};

pub const DEFAULT_MAX_CYCLES: u64 = 50_000_000;
pub const DEFAULT_CACHE_LINES: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("memory fault at {addr:#010x}")]
    MemFault { addr: u32 },
    #[error("unsupported instruction {word:#010x} at {addr:#010x}")]
    UnsupportedInstruction { addr: u32, word: u32 },
    #[error("unknown ecall service {service} at {pc:#010x}")]
    UnknownEcall { pc: u32, service: u32 },
    #[error("cycle limit of {limit} exceeded")]
    CycleLimitExceeded { limit: u64 },
    #[error("this architecture needs a program key")]
    MissingKey,
    #[error("the mask-based architecture needs a mask stream")]
    MissingMask,
    #[error("mask does not fit the image: {0}")]
    InvalidMask(ObfError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Baseline,
    StalledHash,
    MaskBased,
    CachedHash,
}

impl ArchKind {
    pub fn uses_hash(self) -> bool {
        matches!(self, ArchKind::StalledHash | ArchKind::CachedHash)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Baseline => "baseline",
            ArchKind::StalledHash => "stalled",
            ArchKind::MaskBased => "mask",
            ArchKind::CachedHash => "cached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroArchConfig {
    pub kind: ArchKind,
    pub hash: HashSpec,
    pub cache_lines: u32,
    pub key: Option<ProgramKey>,
    pub mask: Option<MaskStream>,
}

impl MicroArchConfig {
    pub fn baseline() -> Self {
        MicroArchConfig {
            kind: ArchKind::Baseline,
            hash: HashSpec::default(),
            cache_lines: DEFAULT_CACHE_LINES,
            key: None,
            mask: None,
        }
    }

    pub fn stalled(key: ProgramKey, hash: HashSpec) -> Self {
        MicroArchConfig { kind: ArchKind::StalledHash, hash, key: Some(key), ..Self::baseline() }
    }

    pub fn cached(key: ProgramKey, hash: HashSpec, cache_lines: u32) -> Self {
        MicroArchConfig { kind: ArchKind::CachedHash, hash, cache_lines, key: Some(key), ..Self::baseline() }
    }

    pub fn masked(mask: MaskStream) -> Self {
        MicroArchConfig { kind: ArchKind::MaskBased, mask: Some(mask), ..Self::baseline() }
    }

    pub fn validate(&self, img: &ProgramImage) -> Result<(), SimError> {
        match self.kind {
            ArchKind::Baseline => {}
            ArchKind::StalledHash | ArchKind::CachedHash => {
                if self.key.is_none() {
                    return Err(SimError::MissingKey);
                }
                if self.kind == ArchKind::CachedHash && !self.cache_lines.is_power_of_two() {
                    return Err(SimError::InvalidConfig(format!(
                        "cache lines must be a power of two, got {}",
                        self.cache_lines
                    )));
                }
            }
            ArchKind::MaskBased => {
                let mask = self.mask.as_ref().ok_or(SimError::MissingMask)?;
                mask.validate(img).map_err(SimError::InvalidMask)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_cycles: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_cycles: DEFAULT_MAX_CYCLES }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleStats {
    pub cycles: u64,
    pub retired: u64,
    /// Dynamic conditional branches that executed.
    pub branch_count: u64,
    /// Conditional branches whose effective outcome was taken.
    pub taken_flushes: u64,
    /// JAL/JALR redirects.
    pub jump_flushes: u64,
    /// Cycles a branch spent in EX waiting for its hash bit.
    pub hash_stall_cycles: u64,
    /// Cycles an instruction spent in ID waiting for a load result.
    pub load_use_stalls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

impl fmt::Display for CycleStats {
    /// Flat `key=value` block, one counter per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cycles={}", self.cycles)?;
        writeln!(f, "retired={}", self.retired)?;
        writeln!(f, "branch_count={}", self.branch_count)?;
        writeln!(f, "taken_flushes={}", self.taken_flushes)?;
        writeln!(f, "jump_flushes={}", self.jump_flushes)?;
        writeln!(f, "hash_stall_cycles={}", self.hash_stall_cycles)?;
        writeln!(f, "load_use_stalls={}", self.load_use_stalls)?;
        writeln!(f, "cache_hits={}", self.cache_hits)?;
        writeln!(f, "cache_misses={}", self.cache_misses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchEvent {
    /// Effective outcome after the reversal bit was applied.
    pub taken: bool,
    /// The reversal bit used at execute (always 0 on Baseline).
    pub flip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub cycle: u64,
    pub pc: u32,
    pub word: u32,
    pub branch: Option<BranchEvent>,
}

impl TraceEntry {
    /// The architecture-independent part: retired pc and effective outcome.
    pub fn path(&self) -> (u32, Option<bool>) {
        (self.pc, self.branch.map(|b| b.taken))
    }
}

impl fmt::Display for TraceEntry {
    /// `cycle pc word [B taken|not-taken d=<bit>]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:08x} {:08x}", self.cycle, self.pc, self.word)?;
        if let Some(b) = self.branch {
            let outcome = if b.taken { "taken" } else { "not-taken" };
            write!(f, " B {outcome} d={}", b.flip as u8)?;
        }
        Ok(())
    }
}

/// Index of the first entry where two traces take different paths, or
/// where one ends before the other.
pub fn first_divergence(a: &[TraceEntry], b: &[TraceEntry]) -> Option<usize> {
    let common = a.iter().zip(b).position(|(x, y)| x.path() != y.path());
    match common {
        Some(i) => Some(i),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: MachineState,
    pub stats: CycleStats,
    pub trace: Vec<TraceEntry>,
}

impl RunOutput {
    pub fn exit_code(&self) -> u32 {
        self.state.exit_code.expect("completed run has an exit code")
    }
}

/// Runs `img` to its exit ECALL on the given core.
pub fn run(img: &ProgramImage, arch: &MicroArchConfig, limits: Limits) -> Result<RunOutput, SimError> {
    let mut p = Pipeline::new(img, arch, limits)?;
    p.run()?;
    Ok(p.into_output())
}

#[cfg(test)]
mod tests;
