//! Architectural state and single-instruction execution.

use crate::isa::{Instruction, LoadWidth, ProgramImage, Reg, RegFile, StoreWidth};

use super::SimError;

/// Top of the zero-initialized stack segment; `sp` starts here.
pub const STACK_TOP: u32 = 0x8000_0000;
pub const STACK_SIZE: u32 = 64 * 1024;

/// ECALL service numbers, selected by `a7`.
pub const ECALL_EXIT: u32 = 93;
pub const ECALL_PUTCHAR: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    base: u32,
    bytes: Vec<u8>,
    writable: bool,
}

impl Segment {
    fn offset(&self, addr: u32, len: u32) -> Option<usize> {
        let off = addr.checked_sub(self.base)? as usize;
        (off + len as usize <= self.bytes.len()).then_some(off)
    }
}

/// Byte-addressed memory made of the image's code (read-only), its data
/// segment and a stack. Accesses outside these, misaligned accesses and
/// stores to code fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    segments: Vec<Segment>,
}

impl Memory {
    pub fn from_image(img: &ProgramImage) -> Self {
        let code: Vec<u8> = img.code().iter().flat_map(|w| w.to_le_bytes()).collect();
        Memory {
            segments: vec![
                Segment { base: img.base(), bytes: code, writable: false },
                Segment { base: img.data_base(), bytes: img.data().to_vec(), writable: true },
                Segment { base: STACK_TOP - STACK_SIZE, bytes: vec![0; STACK_SIZE as usize], writable: true },
            ],
        }
    }

    fn locate(&self, addr: u32, len: u32) -> Result<(usize, usize), SimError> {
        if !addr.is_multiple_of(len) {
            return Err(SimError::MemFault { addr });
        }
        self.segments
            .iter()
            .enumerate()
            .find_map(|(i, s)| s.offset(addr, len).map(|off| (i, off)))
            .ok_or(SimError::MemFault { addr })
    }

    pub fn load(&self, addr: u32, len: u32) -> Result<u32, SimError> {
        let (seg, off) = self.locate(addr, len)?;
        let bytes = &self.segments[seg].bytes[off..off + len as usize];
        Ok(bytes.iter().rev().fold(0u32, |acc, &b| acc << 8 | b as u32))
    }

    pub fn store(&mut self, addr: u32, len: u32, value: u32) -> Result<(), SimError> {
        let (seg, off) = self.locate(addr, len)?;
        let seg = &mut self.segments[seg];
        if !seg.writable {
            return Err(SimError::MemFault { addr });
        }
        seg.bytes[off..off + len as usize].copy_from_slice(&value.to_le_bytes()[..len as usize]);
        Ok(())
    }

    /// Current contents of the data segment.
    pub fn data(&self) -> &[u8] {
        &self.segments[1].bytes
    }

    pub fn stack(&self) -> &[u8] {
        &self.segments[2].bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: u32,
    pub regs: RegFile,
    pub mem: Memory,
    pub exit_code: Option<u32>,
    pub output: Vec<u8>,
}

/// What executing one instruction did, as seen by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Executed {
    pub next_pc: u32,
    /// `(static_taken, effective_taken)` for conditional branches.
    pub branch: Option<(bool, bool)>,
    pub redirect: bool,
    pub halt: bool,
}

impl MachineState {
    pub fn new(img: &ProgramImage) -> Self {
        let mut regs = RegFile::default();
        regs.set(Reg::SP, STACK_TOP);
        MachineState { pc: img.entry(), regs, mem: Memory::from_image(img), exit_code: None, output: Vec::new() }
    }

    /// Executes `instr` at `pc`. For conditional branches the effective
    /// outcome is the static taken-bit XOR `flip`.
    pub fn execute(&mut self, pc: u32, instr: &Instruction, flip: bool) -> Result<Executed, SimError> {
        let seq = pc.wrapping_add(4);
        let mut out = Executed { next_pc: seq, branch: None, redirect: false, halt: false };
        match *instr {
            Instruction::Lui { rd, imm20 } => self.regs.set(rd, imm20 << 12),
            Instruction::Auipc { rd, imm20 } => self.regs.set(rd, pc.wrapping_add(imm20 << 12)),
            Instruction::Jal { rd, offset } => {
                self.regs.set(rd, seq);
                out.next_pc = pc.wrapping_add(offset as u32);
                out.redirect = true;
            }
            Instruction::Jalr { rd, rs1, offset } => {
                let target = self.regs.get(rs1).wrapping_add(offset as u32) & !1;
                self.regs.set(rd, seq);
                out.next_pc = target;
                out.redirect = true;
            }
            Instruction::Branch { cond, rs1, rs2, offset } => {
                let taken = cond.taken(self.regs.get(rs1), self.regs.get(rs2));
                let effective = taken ^ flip;
                out.branch = Some((taken, effective));
                if effective {
                    out.next_pc = pc.wrapping_add(offset as u32);
                    out.redirect = true;
                }
            }
            Instruction::Load { width, rd, rs1, offset } => {
                let addr = self.regs.get(rs1).wrapping_add(offset as u32);
                let raw = self.mem.load(addr, width.bytes())?;
                let value = match width {
                    LoadWidth::B => raw as u8 as i8 as i32 as u32,
                    LoadWidth::H => raw as u16 as i16 as i32 as u32,
                    LoadWidth::W | LoadWidth::BU | LoadWidth::HU => raw,
                };
                self.regs.set(rd, value);
            }
            Instruction::Store { width, rs1, rs2, offset } => {
                let addr = self.regs.get(rs1).wrapping_add(offset as u32);
                let value = match width {
                    StoreWidth::B => self.regs.get(rs2) & 0xff,
                    StoreWidth::H => self.regs.get(rs2) & 0xffff,
                    StoreWidth::W => self.regs.get(rs2),
                };
                self.mem.store(addr, width.bytes(), value)?;
            }
            Instruction::OpImm { op, rd, rs1, imm } => self.regs.set(rd, op.apply(self.regs.get(rs1), imm as u32)),
            Instruction::Op { op, rd, rs1, rs2 } => self.regs.set(rd, op.apply(self.regs.get(rs1), self.regs.get(rs2))),
            Instruction::Ecall => match self.regs.get(Reg::A7) {
                ECALL_EXIT => {
                    self.exit_code = Some(self.regs.get(Reg::A0));
                    out.halt = true;
                }
                ECALL_PUTCHAR => self.output.push(self.regs.get(Reg::A0) as u8),
                other => return Err(SimError::UnknownEcall { pc, service: other }),
            },
        }
        self.pc = if out.halt { pc } else { out.next_pc };
        Ok(out)
    }
}
