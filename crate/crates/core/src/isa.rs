//! RV32I subset: instruction model, bit-exact codec and program images.
//!
//! The supported subset is LUI, AUIPC, JAL, JALR, the six conditional
//! branches, LB/LH/LW/LBU/LHU, SB/SH/SW, every OP-IMM and OP instruction of
//! the base ISA, and ECALL. Anything else (FENCE, CSR, extensions) is
//! rejected by [`decode`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unsupported instruction word {0:#010x}")]
    UnsupportedInstruction(u32),
    #[error("{what} {value} is out of range")]
    Range { what: &'static str, value: i64 },
    #[error("not a conditional branch")]
    NotABranch,
    #[error("invalid program image: {0}")]
    Image(String),
}

/// An integer register `x0..x31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);
    pub const A0: Reg = Reg(10);
    pub const A7: Reg = Reg(17);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    fn from_field(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Architectural register file. `x0` reads as zero and ignores writes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegFile([u32; 32]);

impl RegFile {
    pub fn get(&self, r: Reg) -> u32 {
        self.0[r.index()]
    }

    pub fn set(&mut self, r: Reg, value: u32) {
        if r != Reg::ZERO {
            self.0[r.index()] = value;
        }
    }

    pub fn as_array(&self) -> &[u32; 32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

impl BranchCond {
    pub const ALL: [BranchCond; 6] =
        [BranchCond::Eq, BranchCond::Ne, BranchCond::Lt, BranchCond::Ge, BranchCond::Ltu, BranchCond::Geu];

    /// The condition whose outcome is the negation of `self` for all operands.
    pub fn complement(self) -> BranchCond {
        match self {
            BranchCond::Eq => BranchCond::Ne,
            BranchCond::Ne => BranchCond::Eq,
            BranchCond::Lt => BranchCond::Ge,
            BranchCond::Ge => BranchCond::Lt,
            BranchCond::Ltu => BranchCond::Geu,
            BranchCond::Geu => BranchCond::Ltu,
        }
    }

    /// Static taken-bit for operand values `a` (rs1) and `b` (rs2).
    pub fn taken(self, a: u32, b: u32) -> bool {
        match self {
            BranchCond::Eq => a == b,
            BranchCond::Ne => a != b,
            BranchCond::Lt => (a as i32) < (b as i32),
            BranchCond::Ge => (a as i32) >= (b as i32),
            BranchCond::Ltu => a < b,
            BranchCond::Geu => a >= b,
        }
    }

    fn funct3(self) -> u32 {
        match self {
            BranchCond::Eq => 0b000,
            BranchCond::Ne => 0b001,
            BranchCond::Lt => 0b100,
            BranchCond::Ge => 0b101,
            BranchCond::Ltu => 0b110,
            BranchCond::Geu => 0b111,
        }
    }

    fn from_funct3(f: u32) -> Option<BranchCond> {
        Some(match f {
            0b000 => BranchCond::Eq,
            0b001 => BranchCond::Ne,
            0b100 => BranchCond::Lt,
            0b101 => BranchCond::Ge,
            0b110 => BranchCond::Ltu,
            0b111 => BranchCond::Geu,
            _ => return None,
        })
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BranchCond::Eq => "beq",
            BranchCond::Ne => "bne",
            BranchCond::Lt => "blt",
            BranchCond::Ge => "bge",
            BranchCond::Ltu => "bltu",
            BranchCond::Geu => "bgeu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
}

impl AluOp {
    pub const ALL: [AluOp; 10] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Sll,
        AluOp::Slt,
        AluOp::Sltu,
        AluOp::Xor,
        AluOp::Srl,
        AluOp::Sra,
        AluOp::Or,
        AluOp::And,
    ];

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Sll => a << (b & 31),
            AluOp::Slt => ((a as i32) < (b as i32)) as u32,
            AluOp::Sltu => (a < b) as u32,
            AluOp::Xor => a ^ b,
            AluOp::Srl => a >> (b & 31),
            AluOp::Sra => ((a as i32) >> (b & 31)) as u32,
            AluOp::Or => a | b,
            AluOp::And => a & b,
        }
    }

    pub fn is_shift(self) -> bool {
        matches!(self, AluOp::Sll | AluOp::Srl | AluOp::Sra)
    }

    fn funct3(self) -> u32 {
        match self {
            AluOp::Add | AluOp::Sub => 0b000,
            AluOp::Sll => 0b001,
            AluOp::Slt => 0b010,
            AluOp::Sltu => 0b011,
            AluOp::Xor => 0b100,
            AluOp::Srl | AluOp::Sra => 0b101,
            AluOp::Or => 0b110,
            AluOp::And => 0b111,
        }
    }

    fn funct7(self) -> u32 {
        match self {
            AluOp::Sub | AluOp::Sra => 0b010_0000,
            _ => 0,
        }
    }

    fn from_fields(funct3: u32, funct7: u32) -> Option<AluOp> {
        Some(match (funct3, funct7) {
            (0b000, 0) => AluOp::Add,
            (0b000, 0x20) => AluOp::Sub,
            (0b001, 0) => AluOp::Sll,
            (0b010, 0) => AluOp::Slt,
            (0b011, 0) => AluOp::Sltu,
            (0b100, 0) => AluOp::Xor,
            (0b101, 0) => AluOp::Srl,
            (0b101, 0x20) => AluOp::Sra,
            (0b110, 0) => AluOp::Or,
            (0b111, 0) => AluOp::And,
            _ => return None,
        })
    }

    pub fn mnemonic(self, immediate: bool) -> &'static str {
        match (self, immediate) {
            (AluOp::Add, false) => "add",
            (AluOp::Add, true) => "addi",
            (AluOp::Sub, _) => "sub",
            (AluOp::Sll, false) => "sll",
            (AluOp::Sll, true) => "slli",
            (AluOp::Slt, false) => "slt",
            (AluOp::Slt, true) => "slti",
            (AluOp::Sltu, false) => "sltu",
            (AluOp::Sltu, true) => "sltiu",
            (AluOp::Xor, false) => "xor",
            (AluOp::Xor, true) => "xori",
            (AluOp::Srl, false) => "srl",
            (AluOp::Srl, true) => "srli",
            (AluOp::Sra, false) => "sra",
            (AluOp::Sra, true) => "srai",
            (AluOp::Or, false) => "or",
            (AluOp::Or, true) => "ori",
            (AluOp::And, false) => "and",
            (AluOp::And, true) => "andi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadWidth {
    B,
    H,
    W,
    BU,
    HU,
}

impl LoadWidth {
    pub const ALL: [LoadWidth; 5] = [LoadWidth::B, LoadWidth::H, LoadWidth::W, LoadWidth::BU, LoadWidth::HU];

    pub fn bytes(self) -> u32 {
        match self {
            LoadWidth::B | LoadWidth::BU => 1,
            LoadWidth::H | LoadWidth::HU => 2,
            LoadWidth::W => 4,
        }
    }

    fn funct3(self) -> u32 {
        match self {
            LoadWidth::B => 0b000,
            LoadWidth::H => 0b001,
            LoadWidth::W => 0b010,
            LoadWidth::BU => 0b100,
            LoadWidth::HU => 0b101,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            LoadWidth::B => "lb",
            LoadWidth::H => "lh",
            LoadWidth::W => "lw",
            LoadWidth::BU => "lbu",
            LoadWidth::HU => "lhu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreWidth {
    B,
    H,
    W,
}

impl StoreWidth {
    pub const ALL: [StoreWidth; 3] = [StoreWidth::B, StoreWidth::H, StoreWidth::W];

    pub fn bytes(self) -> u32 {
        match self {
            StoreWidth::B => 1,
            StoreWidth::H => 2,
            StoreWidth::W => 4,
        }
    }

    fn funct3(self) -> u32 {
        match self {
            StoreWidth::B => 0b000,
            StoreWidth::H => 0b001,
            StoreWidth::W => 0b010,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            StoreWidth::B => "sb",
            StoreWidth::H => "sh",
            StoreWidth::W => "sw",
        }
    }
}

/// A decoded instruction of the supported subset.
///
/// Immediates are stored as their architectural values: `imm20` is the raw
/// 20-bit upper-immediate field, branch and jump offsets are signed byte
/// offsets relative to the instruction's own address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Lui { rd: Reg, imm20: u32 },
    Auipc { rd: Reg, imm20: u32 },
    Jal { rd: Reg, offset: i32 },
    Jalr { rd: Reg, rs1: Reg, offset: i32 },
    Branch { cond: BranchCond, rs1: Reg, rs2: Reg, offset: i32 },
    Load { width: LoadWidth, rd: Reg, rs1: Reg, offset: i32 },
    Store { width: StoreWidth, rs1: Reg, rs2: Reg, offset: i32 },
    OpImm { op: AluOp, rd: Reg, rs1: Reg, imm: i32 },
    Op { op: AluOp, rd: Reg, rs1: Reg, rs2: Reg },
    Ecall,
}

pub const NOP: Instruction = Instruction::OpImm { op: AluOp::Add, rd: Reg::ZERO, rs1: Reg::ZERO, imm: 0 };

const OPC_LUI: u32 = 0b011_0111;
const OPC_AUIPC: u32 = 0b001_0111;
const OPC_JAL: u32 = 0b110_1111;
const OPC_JALR: u32 = 0b110_0111;
const OPC_BRANCH: u32 = 0b110_0011;
const OPC_LOAD: u32 = 0b000_0011;
const OPC_STORE: u32 = 0b010_0011;
const OPC_OP_IMM: u32 = 0b001_0011;
const OPC_OP: u32 = 0b011_0011;
const OPC_SYSTEM: u32 = 0b111_0011;
const ECALL_WORD: u32 = 0x0000_0073;

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn i_imm(w: u32) -> i32 {
    (w as i32) >> 20
}

fn s_imm(w: u32) -> i32 {
    sign_extend(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12)
}

fn b_imm(w: u32) -> i32 {
    let imm = ((w >> 31) & 1) << 12 | ((w >> 7) & 1) << 11 | ((w >> 25) & 0x3f) << 5 | ((w >> 8) & 0xf) << 1;
    sign_extend(imm, 13)
}

fn j_imm(w: u32) -> i32 {
    let imm = ((w >> 31) & 1) << 20 | ((w >> 12) & 0xff) << 12 | ((w >> 20) & 1) << 11 | ((w >> 21) & 0x3ff) << 1;
    sign_extend(imm, 21)
}

/// Decodes a little-endian-loaded instruction word.
pub fn decode(w: u32) -> Result<Instruction, IsaError> {
    let unsupported = || IsaError::UnsupportedInstruction(w);
    let rd = Reg::from_field(w >> 7);
    let rs1 = Reg::from_field(w >> 15);
    let rs2 = Reg::from_field(w >> 20);
    let funct3 = (w >> 12) & 0b111;
    let funct7 = w >> 25;
    let instr = match w & 0x7f {
        OPC_LUI => Instruction::Lui { rd, imm20: w >> 12 },
        OPC_AUIPC => Instruction::Auipc { rd, imm20: w >> 12 },
        OPC_JAL => Instruction::Jal { rd, offset: j_imm(w) },
        OPC_JALR if funct3 == 0 => Instruction::Jalr { rd, rs1, offset: i_imm(w) },
        OPC_BRANCH => {
            let cond = BranchCond::from_funct3(funct3).ok_or_else(unsupported)?;
            Instruction::Branch { cond, rs1, rs2, offset: b_imm(w) }
        }
        OPC_LOAD => {
            let width = LoadWidth::ALL.into_iter().find(|l| l.funct3() == funct3).ok_or_else(unsupported)?;
            Instruction::Load { width, rd, rs1, offset: i_imm(w) }
        }
        OPC_STORE => {
            let width = StoreWidth::ALL.into_iter().find(|s| s.funct3() == funct3).ok_or_else(unsupported)?;
            Instruction::Store { width, rs1, rs2, offset: s_imm(w) }
        }
        OPC_OP_IMM => {
            let op = match funct3 {
                0b001 | 0b101 => AluOp::from_fields(funct3, funct7).ok_or_else(unsupported)?,
                _ => AluOp::from_fields(funct3, 0).ok_or_else(unsupported)?,
            };
            let imm = if op.is_shift() { ((w >> 20) & 0x1f) as i32 } else { i_imm(w) };
            Instruction::OpImm { op, rd, rs1, imm }
        }
        OPC_OP => {
            let op = AluOp::from_fields(funct3, funct7).ok_or_else(unsupported)?;
            Instruction::Op { op, rd, rs1, rs2 }
        }
        OPC_SYSTEM if w == ECALL_WORD => Instruction::Ecall,
        _ => return Err(unsupported()),
    };
    Ok(instr)
}

fn check_range(what: &'static str, value: i32, min: i32, max: i32) -> Result<u32, IsaError> {
    if value < min || value > max {
        return Err(IsaError::Range { what, value: value as i64 });
    }
    Ok(value as u32)
}

fn check_even(what: &'static str, value: i32) -> Result<(), IsaError> {
    if value & 1 != 0 {
        return Err(IsaError::Range { what, value: value as i64 });
    }
    Ok(())
}

fn r_type(funct7: u32, rs2: Reg, rs1: Reg, funct3: u32, rd: Reg, opcode: u32) -> u32 {
    funct7 << 25 | (rs2.0 as u32) << 20 | (rs1.0 as u32) << 15 | funct3 << 12 | (rd.0 as u32) << 7 | opcode
}

fn i_type(imm: u32, rs1: Reg, funct3: u32, rd: Reg, opcode: u32) -> u32 {
    (imm & 0xfff) << 20 | (rs1.0 as u32) << 15 | funct3 << 12 | (rd.0 as u32) << 7 | opcode
}

/// Encodes an instruction, rejecting immediates that do not fit their field.
pub fn encode(instr: &Instruction) -> Result<u32, IsaError> {
    let word = match *instr {
        Instruction::Lui { rd, imm20 } | Instruction::Auipc { rd, imm20 } => {
            if imm20 > 0xf_ffff {
                return Err(IsaError::Range { what: "upper immediate", value: imm20 as i64 });
            }
            let opcode = if matches!(instr, Instruction::Lui { .. }) { OPC_LUI } else { OPC_AUIPC };
            imm20 << 12 | (rd.0 as u32) << 7 | opcode
        }
        Instruction::Jal { rd, offset } => {
            check_even("jump offset", offset)?;
            let imm = check_range("jump offset", offset, -(1 << 20), (1 << 20) - 2)?;
            let field = ((imm >> 20) & 1) << 31
                | ((imm >> 1) & 0x3ff) << 21
                | ((imm >> 11) & 1) << 20
                | ((imm >> 12) & 0xff) << 12;
            field | (rd.0 as u32) << 7 | OPC_JAL
        }
        Instruction::Jalr { rd, rs1, offset } => {
            let imm = check_range("jalr offset", offset, -2048, 2047)?;
            i_type(imm, rs1, 0, rd, OPC_JALR)
        }
        Instruction::Branch { cond, rs1, rs2, offset } => {
            check_even("branch offset", offset)?;
            let imm = check_range("branch offset", offset, -4096, 4094)?;
            let field =
                ((imm >> 12) & 1) << 31 | ((imm >> 5) & 0x3f) << 25 | ((imm >> 1) & 0xf) << 8 | ((imm >> 11) & 1) << 7;
            field | (rs2.0 as u32) << 20 | (rs1.0 as u32) << 15 | cond.funct3() << 12 | OPC_BRANCH
        }
        Instruction::Load { width, rd, rs1, offset } => {
            let imm = check_range("load offset", offset, -2048, 2047)?;
            i_type(imm, rs1, width.funct3(), rd, OPC_LOAD)
        }
        Instruction::Store { width, rs1, rs2, offset } => {
            let imm = check_range("store offset", offset, -2048, 2047)?;
            ((imm >> 5) & 0x7f) << 25
                | (rs2.0 as u32) << 20
                | (rs1.0 as u32) << 15
                | width.funct3() << 12
                | (imm & 0x1f) << 7
                | OPC_STORE
        }
        Instruction::OpImm { op, rd, rs1, imm } => {
            if op == AluOp::Sub {
                return Err(IsaError::Range { what: "subi (no such instruction)", value: imm as i64 });
            }
            let field = if op.is_shift() {
                op.funct7() << 5 | check_range("shift amount", imm, 0, 31)?
            } else {
                check_range("immediate", imm, -2048, 2047)?
            };
            i_type(field, rs1, op.funct3(), rd, OPC_OP_IMM)
        }
        Instruction::Op { op, rd, rs1, rs2 } => r_type(op.funct7(), rs2, rs1, op.funct3(), rd, OPC_OP),
        Instruction::Ecall => ECALL_WORD,
    };
    Ok(word)
}

/// Returns the branch with the complementary condition; everything else is
/// unchanged, so the taken-bit is negated for every operand pair.
pub fn complement_branch(instr: &Instruction) -> Result<Instruction, IsaError> {
    match *instr {
        Instruction::Branch { cond, rs1, rs2, offset } => {
            Ok(Instruction::Branch { cond: cond.complement(), rs1, rs2, offset })
        }
        _ => Err(IsaError::NotABranch),
    }
}

impl Instruction {
    pub fn is_branch(&self) -> bool {
        matches!(self, Instruction::Branch { .. })
    }

    /// Destination register, if the instruction writes one other than `x0`.
    pub fn dest(&self) -> Option<Reg> {
        let rd = match *self {
            Instruction::Lui { rd, .. }
            | Instruction::Auipc { rd, .. }
            | Instruction::Jal { rd, .. }
            | Instruction::Jalr { rd, .. }
            | Instruction::Load { rd, .. }
            | Instruction::OpImm { rd, .. }
            | Instruction::Op { rd, .. } => rd,
            _ => return None,
        };
        (rd != Reg::ZERO).then_some(rd)
    }

    /// Source registers read by the instruction (`x0` included when named).
    pub fn sources(&self) -> [Option<Reg>; 2] {
        match *self {
            Instruction::Jalr { rs1, .. } | Instruction::Load { rs1, .. } | Instruction::OpImm { rs1, .. } => {
                [Some(rs1), None]
            }
            Instruction::Branch { rs1, rs2, .. }
            | Instruction::Store { rs1, rs2, .. }
            | Instruction::Op { rs1, rs2, .. } => [Some(rs1), Some(rs2)],
            // ECALL reads a0 and a7.
            Instruction::Ecall => [Some(Reg::A0), Some(Reg::A7)],
            _ => [None, None],
        }
    }
}

impl fmt::Display for Instruction {
    /// Assembler syntax with numeric registers; branch and jump offsets are
    /// printed as signed byte offsets, which the assembler accepts back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Lui { rd, imm20 } => write!(f, "lui {rd}, {imm20:#x}"),
            Instruction::Auipc { rd, imm20 } => write!(f, "auipc {rd}, {imm20:#x}"),
            Instruction::Jal { rd, offset } => write!(f, "jal {rd}, {offset}"),
            Instruction::Jalr { rd, rs1, offset } => write!(f, "jalr {rd}, {offset}({rs1})"),
            Instruction::Branch { cond, rs1, rs2, offset } => {
                write!(f, "{} {rs1}, {rs2}, {offset}", cond.mnemonic())
            }
            Instruction::Load { width, rd, rs1, offset } => {
                write!(f, "{} {rd}, {offset}({rs1})", width.mnemonic())
            }
            Instruction::Store { width, rs1, rs2, offset } => {
                write!(f, "{} {rs2}, {offset}({rs1})", width.mnemonic())
            }
            Instruction::OpImm { op, rd, rs1, imm } => write!(f, "{} {rd}, {rs1}, {imm}", op.mnemonic(true)),
            Instruction::Op { op, rd, rs1, rs2 } => write!(f, "{} {rd}, {rs1}, {rs2}", op.mnemonic(false)),
            Instruction::Ecall => f.write_str("ecall"),
        }
    }
}

/// Laid-out program: code words at fixed addresses, one data segment and an
/// entry point. Obfuscation never changes the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    base: u32,
    code: Vec<u32>,
    data_base: u32,
    data: Vec<u8>,
    entry: u32,
}

impl ProgramImage {
    pub fn new(base: u32, code: Vec<u32>, data_base: u32, data: Vec<u8>, entry: u32) -> Result<Self, IsaError> {
        if !base.is_multiple_of(4) {
            return Err(IsaError::Image(format!("base {base:#x} is not 4-byte aligned")));
        }
        if !entry.is_multiple_of(4) {
            return Err(IsaError::Image(format!("entry {entry:#x} is not 4-byte aligned")));
        }
        let code_end = base as u64 + 4 * code.len() as u64;
        if code_end > 1 << 32 {
            return Err(IsaError::Image("code segment wraps the address space".into()));
        }
        if (entry as u64) < base as u64 || entry as u64 >= code_end {
            return Err(IsaError::Image(format!("entry {entry:#x} lies outside the code segment")));
        }
        let data_end = data_base as u64 + data.len() as u64;
        if data_end > 1 << 32 {
            return Err(IsaError::Image("data segment wraps the address space".into()));
        }
        if !data.is_empty() && (data_base as u64) < code_end && (base as u64) < data_end {
            return Err(IsaError::Image("code and data segments overlap".into()));
        }
        Ok(ProgramImage { base, code, data_base, data, entry })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn code(&self) -> &[u32] {
        &self.code
    }

    pub fn data_base(&self) -> u32 {
        self.data_base
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn addr_of(&self, index: usize) -> u32 {
        self.base + 4 * index as u32
    }

    /// Index of the code word at `addr`, if `addr` is an aligned code address.
    pub fn index_of(&self, addr: u32) -> Option<usize> {
        let off = addr.checked_sub(self.base)?;
        let idx = (off / 4) as usize;
        (off % 4 == 0 && idx < self.code.len()).then_some(idx)
    }

    pub fn word_at(&self, addr: u32) -> Option<u32> {
        self.index_of(addr).map(|i| self.code[i])
    }

    /// `(address, word)` pairs in layout order.
    pub fn words(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.code.iter().enumerate().map(|(i, &w)| (self.addr_of(i), w))
    }

    /// Same image with the code words replaced; layout must match.
    pub fn with_code(&self, code: Vec<u32>) -> ProgramImage {
        assert_eq!(code.len(), self.code.len(), "layout change");
        ProgramImage { code, ..self.clone() }
    }

    /// Decodes every code word, reporting the first failing address.
    pub fn decode_all(&self) -> Result<Vec<Instruction>, (u32, IsaError)> {
        self.words().map(|(addr, w)| decode(w).map_err(|e| (addr, e))).collect()
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn reg() -> impl Strategy<Value = Reg> {
        (0u8..32).prop_map(|i| Reg::new(i).unwrap())
    }

    pub(crate) fn instruction() -> impl Strategy<Value = Instruction> {
        prop_oneof![
            (reg(), 0u32..=0xfffff).prop_map(|(rd, imm20)| Instruction::Lui { rd, imm20 }),
            (reg(), 0u32..=0xfffff).prop_map(|(rd, imm20)| Instruction::Auipc { rd, imm20 }),
            (reg(), -(1i32 << 19)..(1 << 19)).prop_map(|(rd, h)| Instruction::Jal { rd, offset: h * 2 }),
            (reg(), reg(), -2048i32..2048).prop_map(|(rd, rs1, offset)| Instruction::Jalr { rd, rs1, offset }),
            (0usize..6, reg(), reg(), -2048i32..2048).prop_map(|(c, rs1, rs2, h)| Instruction::Branch {
                cond: BranchCond::ALL[c],
                rs1,
                rs2,
                offset: h * 2
            }),
            (0usize..5, reg(), reg(), -2048i32..2048).prop_map(|(w, rd, rs1, offset)| Instruction::Load {
                width: LoadWidth::ALL[w],
                rd,
                rs1,
                offset
            }),
            (0usize..3, reg(), reg(), -2048i32..2048).prop_map(|(w, rs1, rs2, offset)| Instruction::Store {
                width: StoreWidth::ALL[w],
                rs1,
                rs2,
                offset
            }),
            (0usize..10, reg(), reg(), -2048i32..2048)
                .prop_filter("no subi", |(o, ..)| AluOp::ALL[*o] != AluOp::Sub)
                .prop_map(|(o, rd, rs1, imm)| {
                    let op = AluOp::ALL[o];
                    let imm = if op.is_shift() { imm & 31 } else { imm };
                    Instruction::OpImm { op, rd, rs1, imm }
                }),
            (0usize..10, reg(), reg(), reg()).prop_map(|(o, rd, rs1, rs2)| Instruction::Op {
                op: AluOp::ALL[o],
                rd,
                rs1,
                rs2
            }),
            Just(Instruction::Ecall),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_decode_identity(instr in instruction()) {
            let w = encode(&instr).unwrap();
            prop_assert_eq!(decode(w).unwrap(), instr);
        }

        #[test]
        fn decode_encode_identity(w in any::<u32>()) {
            if let Ok(instr) = decode(w) {
                prop_assert_eq!(encode(&instr).unwrap(), w);
            }
        }
    }
}
