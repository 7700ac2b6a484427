//! Keyed branch-reversal obfuscation for RV32I programs, and a cycle-level
//! model of the cores that undo it at run time.
//!
//! The obfuscator reverses every conditional branch whose keyed one-bit hash
//! of its address is 1 ([`obfuscate::obfuscate_image`]). A trusted core XORs
//! each branch outcome with the same bit at execute, restoring the original
//! control flow; an untrusted core runs the reversed branches as written.
//! [`sim`] models a 7-stage in-order pipeline with four ways of obtaining
//! that bit and reports exact cycle counts for each.

pub mod asm;
pub mod bench;
pub mod isa;
pub mod obfuscate;
pub mod prf;
pub mod sim;

pub use isa::{Instruction, ProgramImage};
pub use prf::{hash_bit, HashSpec, ProgramKey};
