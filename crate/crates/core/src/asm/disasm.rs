use std::collections::BTreeSet;
use std::fmt::Write;

use super::AsmError;
use crate::isa::{decode, Instruction, ProgramImage};

fn label(addr: u32) -> String {
    format!("L_{addr:08x}")
}

fn target(img: &ProgramImage, addr: u32, offset: i32) -> Option<u32> {
    let t = addr.wrapping_add(offset as u32);
    img.index_of(t).map(|_| t)
}

/// Renders an image as assembler source that reassembles to the same image.
///
/// Branch and jump targets inside the code segment get synthesized
/// `L_<addr>` labels; targets outside it are printed as raw byte offsets.
pub fn disassemble(img: &ProgramImage) -> Result<String, AsmError> {
    let instrs: Vec<(u32, Instruction)> = img
        .words()
        .map(|(addr, word)| {
            decode(word).map(|i| (addr, i)).map_err(|_| AsmError::UnsupportedInstruction { addr, word })
        })
        .collect::<Result<_, _>>()?;

    let mut labels = BTreeSet::from([img.entry()]);
    for &(addr, instr) in &instrs {
        if let Instruction::Branch { offset, .. } | Instruction::Jal { offset, .. } = instr {
            labels.extend(target(img, addr, offset));
        }
    }

    let mut out = String::new();
    writeln!(out, ".org {:#010x}", img.base()).unwrap();
    writeln!(out, ".entry {}", label(img.entry())).unwrap();
    for (addr, instr) in instrs {
        if labels.contains(&addr) {
            writeln!(out, "{}:", label(addr)).unwrap();
        }
        let text = match instr {
            Instruction::Branch { cond, rs1, rs2, offset } => match target(img, addr, offset) {
                Some(t) => format!("{} {rs1}, {rs2}, {}", cond.mnemonic(), label(t)),
                None => instr.to_string(),
            },
            Instruction::Jal { rd, offset } => match target(img, addr, offset) {
                Some(t) => format!("jal {rd}, {}", label(t)),
                None => instr.to_string(),
            },
            _ => instr.to_string(),
        };
        writeln!(out, "    {text}").unwrap();
    }

    writeln!(out, ".data {:#010x}", img.data_base()).unwrap();
    for chunk in img.data().chunks(16) {
        let bytes: Vec<String> = chunk.iter().map(|b| format!("{b:#04x}")).collect();
        writeln!(out, "    .byte {}", bytes.join(", ")).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    #[test]
    fn nop_text() {
        let img = ProgramImage::new(0x1000, vec![0x13], 0x10000, vec![], 0x1000).unwrap();
        let text = disassemble(&img).unwrap();
        assert!(text.contains("addi x0, x0, 0"), "{text}");
        assert_eq!(assemble(&text).unwrap(), img);
    }

    #[test]
    fn invalid_word_reports_address() {
        let img = ProgramImage::new(0x1000, vec![0x13, 0xffff_ffff], 0x10000, vec![], 0x1000).unwrap();
        assert_eq!(disassemble(&img), Err(AsmError::UnsupportedInstruction { addr: 0x1004, word: 0xffff_ffff }));
    }

    #[test]
    fn labels_and_data_round_trip() {
        let src = ".org 0x400\n.entry go\nback: addi a0, a0, -1\ngo: bnez a0, back\n j out\nout: ecall\n beq x0, x0, 64\n.data 0x9000\n.byte 9, 8, 7\n";
        let img = assemble(src).unwrap();
        let text = disassemble(&img).unwrap();
        assert!(text.contains("bne x10, x0, L_00000400"), "{text}");
        assert!(text.contains("beq x0, x0, 64"), "{text}");
        assert_eq!(assemble(&text).unwrap(), img);
    }
}
