//! Two-pass RV32I assembler, disassembler and the `.rvimg` text image format.
//!
//! Accepted syntax is the usual GNU-style RISC-V assembly: `label:`, ABI or
//! numeric register names, `off(reg)` memory operands, `#` or `//` comments.
//! Directives: `.org`, `.entry`, `.text`, `.data [ADDR]`, `.word`, `.half`,
//! `.byte`, `.ascii`, `.asciz`, `.space`, `.align` (log2 bytes).
//! Pseudo-instructions are expanded before layout, so every address is fixed
//! once pass one finishes.

mod disasm;
mod image_file;
mod operand;

use std::collections::HashMap;

use thiserror::Error;

use crate::isa::{encode, AluOp, BranchCond, Instruction, IsaError, LoadWidth, ProgramImage, Reg, StoreWidth};

pub use disasm::disassemble;
pub use image_file::{load_image, save_image, FormatError};

use operand::{parse_int, parse_mem, parse_reg, Imm, Target};

/// Code base used when the source has no `.org`.
pub const DEFAULT_BASE: u32 = 0x0000_1000;
/// Data segment base used when `.data` carries no address.
pub const DEFAULT_DATA_BASE: u32 = 0x0001_0000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: undefined label `{name}`")]
    UndefinedLabel { line: usize, name: String },
    #[error("line {line}: duplicate label `{name}`")]
    DuplicateLabel { line: usize, name: String },
    #[error("line {line}: {source}")]
    Range { line: usize, source: IsaError },
    #[error("unsupported instruction {word:#010x} at {addr:#010x}")]
    UnsupportedInstruction { addr: u32, word: u32 },
    #[error("invalid layout: {0}")]
    Layout(IsaError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Text,
    Data,
}

#[derive(Debug)]
enum Payload {
    Instr { mnemonic: String, ops: Vec<String> },
    Words(Vec<String>),
    Bytes(Vec<u8>),
    Halves(Vec<String>),
    ByteExprs(Vec<String>),
}

#[derive(Debug)]
struct Item {
    line: usize,
    section: Section,
    addr: u32,
    payload: Payload,
}

/// Pass-one state: symbol table and section cursors.
struct Layout {
    symbols: HashMap<String, u32>,
    items: Vec<Item>,
    section: Section,
    base: Option<u32>,
    text_pc: u32,
    text_started: bool,
    data_base: Option<u32>,
    data_pc: u32,
    data_started: bool,
    entry: Option<(usize, String)>,
}

impl Layout {
    fn pc(&self) -> u32 {
        match self.section {
            Section::Text => self.text_pc,
            Section::Data => self.data_pc,
        }
    }

    fn advance(&mut self, bytes: u32) {
        match self.section {
            Section::Text => {
                self.text_pc = self.text_pc.wrapping_add(bytes);
                self.text_started = true;
            }
            Section::Data => {
                self.data_pc = self.data_pc.wrapping_add(bytes);
                self.data_started = true;
            }
        }
    }

    fn push(&mut self, line: usize, payload: Payload, size: u32) {
        let item = Item { line, section: self.section, addr: self.pc(), payload };
        self.items.push(item);
        self.advance(size);
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'"' => in_str = !in_str,
            b'#' if !in_str => return &line[..i],
            b'/' if !in_str && bytes.get(i + 1) == Some(&b'/') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.') && chars.all(is_label_char)
}

fn split_operands(s: &str) -> Vec<String> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|t| t.trim().to_string()).collect()
}

fn parse_string_literal(line: usize, s: &str) -> Result<Vec<u8>, AsmError> {
    let s = s.trim();
    let inner = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| parse_err(line, "expected a quoted string"))?;
    let mut out = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        let esc = chars.next().ok_or_else(|| parse_err(line, "dangling escape"))?;
        out.push(match esc {
            'n' => b'\n',
            't' => b'\t',
            'r' => b'\r',
            '0' => 0,
            '\\' => b'\\',
            '"' => b'"',
            other => return Err(parse_err(line, format!("unknown escape `\\{other}`"))),
        });
    }
    Ok(out)
}

/// Number of words a (pseudo-)instruction occupies.
fn instr_size(line: usize, mnemonic: &str, ops: &[String]) -> Result<u32, AsmError> {
    Ok(match mnemonic {
        "la" | "call" => 8,
        "li" => {
            let imm = ops.get(1).ok_or_else(|| parse_err(line, "li expects `rd, imm`"))?;
            let v =
                parse_int(imm).ok_or_else(|| parse_err(line, format!("li needs a numeric immediate, got `{imm}`")))?;
            li_parts(line, v)?.len() as u32 * 4
        }
        _ => 4,
    })
}

/// Splits a 32-bit constant into `(is_lui, value)` parts for `li`.
fn li_parts(line: usize, value: i64) -> Result<Vec<(bool, i32)>, AsmError> {
    if value < i32::MIN as i64 || value > u32::MAX as i64 {
        return Err(parse_err(line, format!("li immediate {value} does not fit in 32 bits")));
    }
    let v = value as u32 as i32;
    if (-2048..2048).contains(&v) {
        return Ok(vec![(false, v)]);
    }
    let lo = (v << 20) >> 20;
    let hi = (v.wrapping_sub(lo) as u32 >> 12) as i32;
    if lo == 0 {
        Ok(vec![(true, hi)])
    } else {
        Ok(vec![(true, hi), (false, lo)])
    }
}

fn first_pass(src: &str) -> Result<Layout, AsmError> {
    let mut lay = Layout {
        symbols: HashMap::new(),
        items: Vec::new(),
        section: Section::Text,
        base: None,
        text_pc: DEFAULT_BASE,
        text_started: false,
        data_base: None,
        data_pc: DEFAULT_DATA_BASE,
        data_started: false,
        entry: None,
    };

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let mut rest = strip_comment(raw).trim();

        // Leading labels, possibly several on one line.
        while let Some(colon) = rest.find(':') {
            let name = rest[..colon].trim();
            if !is_label_name(name) {
                break;
            }
            if lay.symbols.insert(name.to_string(), lay.pc()).is_some() {
                return Err(AsmError::DuplicateLabel { line, name: name.to_string() });
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }

        let (head, tail) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], rest[i..].trim()),
            None => (rest, ""),
        };

        if let Some(directive) = head.strip_prefix('.') {
            match directive {
                "org" => {
                    let addr = parse_int(tail).ok_or_else(|| parse_err(line, "`.org` expects an address"))?;
                    if lay.text_started || lay.base.is_some() {
                        return Err(parse_err(line, "`.org` must precede all code and appear once"));
                    }
                    let addr = u32::try_from(addr).map_err(|_| parse_err(line, "`.org` address out of range"))?;
                    lay.base = Some(addr);
                    lay.text_pc = addr;
                    lay.section = Section::Text;
                }
                "entry" => {
                    if !is_label_name(tail) {
                        return Err(parse_err(line, "`.entry` expects a label"));
                    }
                    lay.entry = Some((line, tail.to_string()));
                }
                "text" => lay.section = Section::Text,
                "data" => {
                    lay.section = Section::Data;
                    if !tail.is_empty() {
                        let addr = parse_int(tail).ok_or_else(|| parse_err(line, "`.data` expects an address"))?;
                        let addr = u32::try_from(addr).map_err(|_| parse_err(line, "`.data` address out of range"))?;
                        if lay.data_started || lay.data_base.is_some() {
                            return Err(parse_err(line, "data address must be set once, before any data"));
                        }
                        lay.data_base = Some(addr);
                        lay.data_pc = addr;
                    }
                }
                "word" => {
                    let ops = split_operands(tail);
                    if ops.is_empty() {
                        return Err(parse_err(line, "`.word` expects values"));
                    }
                    if !lay.pc().is_multiple_of(4) {
                        return Err(parse_err(line, "`.word` at unaligned address; use `.align 2`"));
                    }
                    let n = ops.len() as u32;
                    lay.push(line, Payload::Words(ops), 4 * n);
                }
                "half" => {
                    let ops = split_operands(tail);
                    if lay.section == Section::Text {
                        return Err(parse_err(line, "`.half` is only allowed in the data section"));
                    }
                    let n = ops.len() as u32;
                    lay.push(line, Payload::Halves(ops), 2 * n);
                }
                "byte" => {
                    let ops = split_operands(tail);
                    if lay.section == Section::Text {
                        return Err(parse_err(line, "`.byte` is only allowed in the data section"));
                    }
                    let n = ops.len() as u32;
                    lay.push(line, Payload::ByteExprs(ops), n);
                }
                "ascii" | "asciz" => {
                    if lay.section == Section::Text {
                        return Err(parse_err(line, "strings are only allowed in the data section"));
                    }
                    let mut bytes = parse_string_literal(line, tail)?;
                    if directive == "asciz" {
                        bytes.push(0);
                    }
                    let n = bytes.len() as u32;
                    lay.push(line, Payload::Bytes(bytes), n);
                }
                "space" => {
                    if lay.section == Section::Text {
                        return Err(parse_err(line, "`.space` is only allowed in the data section"));
                    }
                    let n = parse_int(tail)
                        .and_then(|n| u32::try_from(n).ok())
                        .ok_or_else(|| parse_err(line, "`.space` expects a byte count"))?;
                    lay.push(line, Payload::Bytes(vec![0; n as usize]), n);
                }
                "align" => {
                    let p = parse_int(tail)
                        .filter(|p| (0..=12).contains(p))
                        .ok_or_else(|| parse_err(line, "`.align` expects a power of two exponent 0..=12"))?;
                    let align = 1u32 << p;
                    let pad = (align - lay.pc() % align) % align;
                    if pad > 0 {
                        if lay.section == Section::Text {
                            return Err(parse_err(line, "text is always word aligned; `.align` above 2 unsupported"));
                        }
                        lay.push(line, Payload::Bytes(vec![0; pad as usize]), pad);
                    }
                }
                other => return Err(parse_err(line, format!("unknown directive `.{other}`"))),
            }
            continue;
        }

        if lay.section != Section::Text {
            return Err(parse_err(line, "instructions are only allowed in the text section"));
        }
        let mnemonic = head.to_ascii_lowercase();
        let ops = split_operands(tail);
        let size = instr_size(line, &mnemonic, &ops)?;
        lay.push(line, Payload::Instr { mnemonic, ops }, size);
    }
    Ok(lay)
}

struct Encoder<'a> {
    symbols: &'a HashMap<String, u32>,
    line: usize,
    pc: u32,
}

impl Encoder<'_> {
    fn err(&self, msg: impl Into<String>) -> AsmError {
        parse_err(self.line, msg)
    }

    fn reg(&self, s: &str) -> Result<Reg, AsmError> {
        parse_reg(s).ok_or_else(|| self.err(format!("bad register `{s}`")))
    }

    fn symbol(&self, name: &str) -> Result<u32, AsmError> {
        self.symbols
            .get(name)
            .copied()
            .ok_or_else(|| AsmError::UndefinedLabel { line: self.line, name: name.to_string() })
    }

    fn imm(&self, s: &str) -> Result<i64, AsmError> {
        match Imm::parse(s).ok_or_else(|| self.err(format!("bad immediate `{s}`")))? {
            Imm::Int(v) => Ok(v),
            Imm::Hi(sym) => {
                let v = self.symbol(&sym)?;
                Ok((v.wrapping_add(0x800) >> 12) as i64)
            }
            Imm::Lo(sym) => {
                let v = self.symbol(&sym)?;
                Ok((((v << 20) as i32) >> 20) as i64)
            }
            Imm::Sym(sym) => Ok(self.symbol(&sym)? as i64),
        }
    }

    fn imm12(&self, s: &str) -> Result<i32, AsmError> {
        let v = self.imm(s)?;
        i32::try_from(v).map_err(|_| self.range("immediate", v))
    }

    fn range(&self, what: &'static str, value: i64) -> AsmError {
        AsmError::Range { line: self.line, source: IsaError::Range { what, value } }
    }

    /// Branch/jump target: a label or a literal signed byte offset.
    fn offset(&self, s: &str) -> Result<i32, AsmError> {
        match Target::parse(s).ok_or_else(|| self.err(format!("bad branch target `{s}`")))? {
            Target::Offset(v) => i32::try_from(v).map_err(|_| self.range("offset", v)),
            Target::Label(name) => Ok(self.symbol(&name)?.wrapping_sub(self.pc) as i32),
        }
    }

    fn mem(&self, s: &str) -> Result<(i32, Reg), AsmError> {
        let (off, base) = parse_mem(s).ok_or_else(|| self.err(format!("bad memory operand `{s}`")))?;
        let off = if off.is_empty() { 0 } else { self.imm12(off)? };
        Ok((off, self.reg(base)?))
    }

    fn expect(&self, ops: &[String], n: usize, form: &str) -> Result<(), AsmError> {
        if ops.len() != n {
            return Err(self.err(format!("expected `{form}`")));
        }
        Ok(())
    }

    fn instrs(&self, mnemonic: &str, ops: &[String]) -> Result<Vec<Instruction>, AsmError> {
        use Instruction as I;
        let alu_r = |op| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 3, "rd, rs1, rs2")?;
            Ok(vec![I::Op { op, rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, rs2: self.reg(&ops[2])? }])
        };
        let alu_i = |op| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 3, "rd, rs1, imm")?;
            Ok(vec![I::OpImm { op, rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, imm: self.imm12(&ops[2])? }])
        };
        let branch = |cond, swap: bool| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 3, "rs1, rs2, target")?;
            let (a, b) = (self.reg(&ops[0])?, self.reg(&ops[1])?);
            let (rs1, rs2) = if swap { (b, a) } else { (a, b) };
            Ok(vec![I::Branch { cond, rs1, rs2, offset: self.offset(&ops[2])? }])
        };
        // Branches against zero: (cond, register goes in rs1?)
        let branch_z = |cond, rs_first: bool| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 2, "rs, target")?;
            let r = self.reg(&ops[0])?;
            let (rs1, rs2) = if rs_first { (r, Reg::ZERO) } else { (Reg::ZERO, r) };
            Ok(vec![I::Branch { cond, rs1, rs2, offset: self.offset(&ops[1])? }])
        };
        let load = |width| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 2, "rd, off(rs1)")?;
            let (offset, rs1) = self.mem(&ops[1])?;
            Ok(vec![I::Load { width, rd: self.reg(&ops[0])?, rs1, offset }])
        };
        let store = |width| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 2, "rs2, off(rs1)")?;
            let (offset, rs1) = self.mem(&ops[1])?;
            Ok(vec![I::Store { width, rs1, rs2: self.reg(&ops[0])?, offset }])
        };
        let upper = |auipc: bool| -> Result<Vec<I>, AsmError> {
            self.expect(ops, 2, "rd, imm20")?;
            let rd = self.reg(&ops[0])?;
            let v = self.imm(&ops[1])?;
            let imm20 = u32::try_from(v).map_err(|_| self.range("upper immediate", v))?;
            Ok(vec![if auipc { I::Auipc { rd, imm20 } } else { I::Lui { rd, imm20 } }])
        };

        match mnemonic {
            "add" => alu_r(AluOp::Add),
            "sub" => alu_r(AluOp::Sub),
            "sll" => alu_r(AluOp::Sll),
            "slt" => alu_r(AluOp::Slt),
            "sltu" => alu_r(AluOp::Sltu),
            "xor" => alu_r(AluOp::Xor),
            "srl" => alu_r(AluOp::Srl),
            "sra" => alu_r(AluOp::Sra),
            "or" => alu_r(AluOp::Or),
            "and" => alu_r(AluOp::And),
            "addi" => alu_i(AluOp::Add),
            "slti" => alu_i(AluOp::Slt),
            "sltiu" => alu_i(AluOp::Sltu),
            "xori" => alu_i(AluOp::Xor),
            "ori" => alu_i(AluOp::Or),
            "andi" => alu_i(AluOp::And),
            "slli" => alu_i(AluOp::Sll),
            "srli" => alu_i(AluOp::Srl),
            "srai" => alu_i(AluOp::Sra),
            "lb" => load(LoadWidth::B),
            "lh" => load(LoadWidth::H),
            "lw" => load(LoadWidth::W),
            "lbu" => load(LoadWidth::BU),
            "lhu" => load(LoadWidth::HU),
            "sb" => store(StoreWidth::B),
            "sh" => store(StoreWidth::H),
            "sw" => store(StoreWidth::W),
            "beq" => branch(BranchCond::Eq, false),
            "bne" => branch(BranchCond::Ne, false),
            "blt" => branch(BranchCond::Lt, false),
            "bge" => branch(BranchCond::Ge, false),
            "bltu" => branch(BranchCond::Ltu, false),
            "bgeu" => branch(BranchCond::Geu, false),
            "bgt" => branch(BranchCond::Lt, true),
            "ble" => branch(BranchCond::Ge, true),
            "bgtu" => branch(BranchCond::Ltu, true),
            "bleu" => branch(BranchCond::Geu, true),
            "beqz" => branch_z(BranchCond::Eq, true),
            "bnez" => branch_z(BranchCond::Ne, true),
            "bltz" => branch_z(BranchCond::Lt, true),
            "bgez" => branch_z(BranchCond::Ge, true),
            "bgtz" => branch_z(BranchCond::Lt, false),
            "blez" => branch_z(BranchCond::Ge, false),
            "lui" => upper(false),
            "auipc" => upper(true),
            "jal" => match ops.len() {
                1 => Ok(vec![I::Jal { rd: Reg::RA, offset: self.offset(&ops[0])? }]),
                2 => Ok(vec![I::Jal { rd: self.reg(&ops[0])?, offset: self.offset(&ops[1])? }]),
                _ => Err(self.err("expected `jal [rd,] target`")),
            },
            "jalr" => match ops.len() {
                1 => Ok(vec![I::Jalr { rd: Reg::RA, rs1: self.reg(&ops[0])?, offset: 0 }]),
                2 => {
                    let (offset, rs1) = self.mem(&ops[1])?;
                    Ok(vec![I::Jalr { rd: self.reg(&ops[0])?, rs1, offset }])
                }
                3 => {
                    Ok(vec![I::Jalr { rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, offset: self.imm12(&ops[2])? }])
                }
                _ => Err(self.err("expected `jalr rd, off(rs1)`")),
            },
            "j" => {
                self.expect(ops, 1, "target")?;
                Ok(vec![I::Jal { rd: Reg::ZERO, offset: self.offset(&ops[0])? }])
            }
            "jr" => {
                self.expect(ops, 1, "rs")?;
                Ok(vec![I::Jalr { rd: Reg::ZERO, rs1: self.reg(&ops[0])?, offset: 0 }])
            }
            "ret" => {
                self.expect(ops, 0, "ret")?;
                Ok(vec![I::Jalr { rd: Reg::ZERO, rs1: Reg::RA, offset: 0 }])
            }
            "nop" => {
                self.expect(ops, 0, "nop")?;
                Ok(vec![crate::isa::NOP])
            }
            "mv" => {
                self.expect(ops, 2, "rd, rs")?;
                Ok(vec![I::OpImm { op: AluOp::Add, rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, imm: 0 }])
            }
            "not" => {
                self.expect(ops, 2, "rd, rs")?;
                Ok(vec![I::OpImm { op: AluOp::Xor, rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, imm: -1 }])
            }
            "neg" => {
                self.expect(ops, 2, "rd, rs")?;
                Ok(vec![I::Op { op: AluOp::Sub, rd: self.reg(&ops[0])?, rs1: Reg::ZERO, rs2: self.reg(&ops[1])? }])
            }
            "seqz" => {
                self.expect(ops, 2, "rd, rs")?;
                Ok(vec![I::OpImm { op: AluOp::Sltu, rd: self.reg(&ops[0])?, rs1: self.reg(&ops[1])?, imm: 1 }])
            }
            "snez" => {
                self.expect(ops, 2, "rd, rs")?;
                Ok(vec![I::Op { op: AluOp::Sltu, rd: self.reg(&ops[0])?, rs1: Reg::ZERO, rs2: self.reg(&ops[1])? }])
            }
            "li" => {
                self.expect(ops, 2, "rd, imm")?;
                let rd = self.reg(&ops[0])?;
                let v = parse_int(&ops[1]).ok_or_else(|| self.err("li needs a numeric immediate"))?;
                let parts = li_parts(self.line, v)?;
                let mut out = Vec::new();
                let mut have_upper = false;
                for (is_upper, part) in parts {
                    if is_upper {
                        out.push(I::Lui { rd, imm20: part as u32 & 0xf_ffff });
                        have_upper = true;
                    } else {
                        let rs1 = if have_upper { rd } else { Reg::ZERO };
                        out.push(I::OpImm { op: AluOp::Add, rd, rs1, imm: part });
                    }
                }
                Ok(out)
            }
            "la" => {
                self.expect(ops, 2, "rd, label")?;
                let rd = self.reg(&ops[0])?;
                let addr = self.symbol(&ops[1])?;
                let lo = ((addr << 20) as i32) >> 20;
                let hi = addr.wrapping_sub(lo as u32) >> 12;
                Ok(vec![I::Lui { rd, imm20: hi }, I::OpImm { op: AluOp::Add, rd, rs1: rd, imm: lo }])
            }
            "call" => {
                self.expect(ops, 1, "label")?;
                let off = self.offset(&ops[0])?;
                let lo = (off << 20) >> 20;
                let hi = (off.wrapping_sub(lo) as u32) >> 12;
                Ok(vec![I::Auipc { rd: Reg::RA, imm20: hi }, I::Jalr { rd: Reg::RA, rs1: Reg::RA, offset: lo }])
            }
            "ecall" => {
                self.expect(ops, 0, "ecall")?;
                Ok(vec![I::Ecall])
            }
            other => Err(self.err(format!("unknown mnemonic `{other}`"))),
        }
    }
}

/// Assembles source text into a program image. Pure and deterministic.
pub fn assemble(src: &str) -> Result<ProgramImage, AsmError> {
    let lay = first_pass(src)?;
    let base = lay.base.unwrap_or(DEFAULT_BASE);
    let data_base = lay.data_base.unwrap_or(DEFAULT_DATA_BASE);
    let mut code: Vec<u32> = Vec::with_capacity(((lay.text_pc - base) / 4) as usize);
    let mut data: Vec<u8> = Vec::with_capacity((lay.data_pc - data_base) as usize);

    for item in &lay.items {
        let enc = Encoder { symbols: &lay.symbols, line: item.line, pc: item.addr };
        let word_value = |s: &str| -> Result<u32, AsmError> {
            let v = enc.imm(s)?;
            if v < i32::MIN as i64 || v > u32::MAX as i64 {
                return Err(enc.range("word", v));
            }
            Ok(v as u32)
        };
        match (&item.payload, item.section) {
            (Payload::Instr { mnemonic, ops }, _) => {
                for instr in enc.instrs(mnemonic, ops)? {
                    let w = encode(&instr).map_err(|source| AsmError::Range { line: item.line, source })?;
                    code.push(w);
                }
            }
            (Payload::Words(vals), Section::Text) => {
                for v in vals {
                    code.push(word_value(v)?);
                }
            }
            (Payload::Words(vals), Section::Data) => {
                for v in vals {
                    data.extend_from_slice(&word_value(v)?.to_le_bytes());
                }
            }
            (Payload::Halves(vals), _) => {
                for v in vals {
                    let x = enc.imm(v)?;
                    if !(-(1 << 15)..(1 << 16)).contains(&x) {
                        return Err(enc.range("half", x));
                    }
                    data.extend_from_slice(&(x as u16).to_le_bytes());
                }
            }
            (Payload::ByteExprs(vals), _) => {
                for v in vals {
                    let x = enc.imm(v)?;
                    if !(-128..256).contains(&x) {
                        return Err(enc.range("byte", x));
                    }
                    data.push(x as u8);
                }
            }
            (Payload::Bytes(bytes), _) => data.extend_from_slice(bytes),
        }
    }

    let entry = match &lay.entry {
        Some((line, name)) => {
            *lay.symbols.get(name).ok_or_else(|| AsmError::UndefinedLabel { line: *line, name: name.clone() })?
        }
        None => base,
    };
    ProgramImage::new(base, code, data_base, data, entry).map_err(AsmError::Layout)
}
