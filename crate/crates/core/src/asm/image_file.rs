//! `.rvimg` text serialization:
//!
//! ```text
//! RVIMG v1
//! base 00001000
//! entry 00001000
//! data_base 00010000
//! 00000013          one code word per line
//! DATA
//! 0102030405...     data bytes, up to 32 per line
//! ```
//!
//! All hex is lowercase on output.

use std::fmt::Write;

use thiserror::Error;

use crate::isa::ProgramImage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed image: {0}")]
pub struct FormatError(pub String);

const MAGIC: &str = "RVIMG v1";
const DATA_BYTES_PER_LINE: usize = 32;

pub fn save_image(img: &ProgramImage) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "base {:08x}", img.base()).unwrap();
    writeln!(out, "entry {:08x}", img.entry()).unwrap();
    writeln!(out, "data_base {:08x}", img.data_base()).unwrap();
    for &w in img.code() {
        writeln!(out, "{w:08x}").unwrap();
    }
    writeln!(out, "DATA").unwrap();
    for chunk in img.data().chunks(DATA_BYTES_PER_LINE) {
        for b in chunk {
            write!(out, "{b:02x}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn err(msg: impl Into<String>) -> FormatError {
    FormatError(msg.into())
}

fn header_field(line: Option<&str>, name: &str) -> Result<u32, FormatError> {
    let line = line.ok_or_else(|| err(format!("missing `{name}` field")))?;
    let value = line
        .strip_prefix(name)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| err(format!("expected `{name} <hex>`, got `{line}`")))?;
    parse_hex32(value).ok_or_else(|| err(format!("bad hex in `{name}` field: `{value}`")))
}

fn parse_hex32(s: &str) -> Option<u32> {
    (s.len() == 8 && s.bytes().all(|b| b.is_ascii_hexdigit())).then(|| u32::from_str_radix(s, 16).ok())?
}

pub fn load_image(text: &str) -> Result<ProgramImage, FormatError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(MAGIC) => {}
        Some(other) if other.starts_with("RVIMG ") => {
            return Err(err(format!("unsupported image version `{other}`")));
        }
        _ => return Err(err("missing `RVIMG v1` header")),
    }
    let base = header_field(lines.next(), "base")?;
    let entry = header_field(lines.next(), "entry")?;
    let data_base = header_field(lines.next(), "data_base")?;

    let mut code = Vec::new();
    let mut saw_data = false;
    for line in lines.by_ref() {
        if line == "DATA" {
            saw_data = true;
            break;
        }
        code.push(parse_hex32(line).ok_or_else(|| err(format!("bad code word `{line}`")))?);
    }
    if !saw_data {
        return Err(err("missing `DATA` section"));
    }
    let mut data = Vec::new();
    for line in lines {
        if line.len() % 2 != 0 {
            return Err(err(format!("odd number of hex digits in data line `{line}`")));
        }
        for pair in line.as_bytes().chunks(2) {
            let s = std::str::from_utf8(pair).map_err(|_| err("non-ascii data"))?;
            if !s.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(err(format!("bad data byte `{s}`")));
            }
            data.push(u8::from_str_radix(s, 16).map_err(|_| err(format!("bad data byte `{s}`")))?);
        }
    }
    ProgramImage::new(base, code, data_base, data, entry).map_err(|e| err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProgramImage {
        let data: Vec<u8> = (0..70u8).collect();
        ProgramImage::new(0x1000, vec![0x13, 0x0040_0593, 0x73], 0x10000, data, 0x1004).unwrap()
    }

    #[test]
    fn round_trip() {
        let img = sample();
        let text = save_image(&img);
        assert!(text.starts_with("RVIMG v1\nbase 00001000\nentry 00001004\ndata_base 00010000\n00000013\n"));
        assert_eq!(load_image(&text).unwrap(), img);
    }

    #[test]
    fn rejects_bad_headers() {
        let text = save_image(&sample());
        let v2 = text.replacen("RVIMG v1", "RVIMG v2", 1);
        assert!(load_image(&v2).unwrap_err().0.contains("version"));
        let misaligned = text.replacen("entry 00001004", "entry 00001006", 1);
        assert!(load_image(&misaligned).is_err());
        let misaligned_base = text.replacen("base 00001000", "base 00001001", 1);
        assert!(load_image(&misaligned_base).is_err());
        let outside = text.replacen("entry 00001004", "entry 00002000", 1);
        assert!(load_image(&outside).is_err());
        assert!(load_image("").is_err());
        assert!(load_image(&text.replacen("DATA\n", "", 1)).is_err());
        assert!(load_image(&text.replacen("00000073", "0000073", 1)).is_err());
    }
}
