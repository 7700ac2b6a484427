use crate::isa::Reg;

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

pub(crate) fn parse_reg(s: &str) -> Option<Reg> {
    let s = s.trim();
    if s == "fp" {
        return Reg::new(8);
    }
    if let Some(n) = s.strip_prefix('x') {
        if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) && !(n.len() > 1 && n.starts_with('0')) {
            return n.parse::<u8>().ok().and_then(Reg::new);
        }
    }
    ABI_NAMES.iter().position(|&name| name == s).and_then(|i| Reg::new(i as u8))
}

/// Integer literal: decimal, `0x`, `0b`, optional sign, or a `'c'` character.
pub(crate) fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) {
        let mut chars = inner.chars();
        let c = chars.next()?;
        return chars.next().is_none().then_some(c as i64);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let mag = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(b, 2).ok()?
    } else if !body.is_empty() && body.chars().all(|c| c.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if neg { -mag } else { mag })
}

/// Splits `off(reg)` into `("off", "reg")`; the offset may be empty.
pub(crate) fn parse_mem(s: &str) -> Option<(&str, &str)> {
    let s = s.trim();
    let open = s.rfind('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    Some((s[..open].trim(), inner.trim()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Imm {
    Int(i64),
    Hi(String),
    Lo(String),
    Sym(String),
}

impl Imm {
    pub(crate) fn parse(s: &str) -> Option<Imm> {
        let s = s.trim();
        if let Some(v) = parse_int(s) {
            return Some(Imm::Int(v));
        }
        let reloc =
            |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(|r| r.trim().to_string());
        if let Some(sym) = reloc("%hi(") {
            return Some(Imm::Hi(sym));
        }
        if let Some(sym) = reloc("%lo(") {
            return Some(Imm::Lo(sym));
        }
        super::is_label_name(s).then(|| Imm::Sym(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Target {
    Offset(i64),
    Label(String),
}

impl Target {
    pub(crate) fn parse(s: &str) -> Option<Target> {
        let s = s.trim();
        if let Some(v) = parse_int(s) {
            return Some(Target::Offset(v));
        }
        super::is_label_name(s).then(|| Target::Label(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registers() {
        assert_eq!(parse_reg("zero"), Reg::new(0));
        assert_eq!(parse_reg("a1"), Reg::new(11));
        assert_eq!(parse_reg("s0"), Reg::new(8));
        assert_eq!(parse_reg("fp"), Reg::new(8));
        assert_eq!(parse_reg("s11"), Reg::new(27));
        assert_eq!(parse_reg("t6"), Reg::new(31));
        assert_eq!(parse_reg("x31"), Reg::new(31));
        assert_eq!(parse_reg("x32"), None);
        assert_eq!(parse_reg("x01"), None);
        assert_eq!(parse_reg("a8"), None);
    }

    #[test]
    fn integers() {
        assert_eq!(parse_int("42"), Some(42));
        assert_eq!(parse_int("-16"), Some(-16));
        assert_eq!(parse_int("0x1F"), Some(31));
        assert_eq!(parse_int("-0x800"), Some(-2048));
        assert_eq!(parse_int("0b101"), Some(5));
        assert_eq!(parse_int("'A'"), Some(65));
        assert_eq!(parse_int("label"), None);
        assert_eq!(parse_int(""), None);
    }

    #[test]
    fn memory_operands() {
        assert_eq!(parse_mem("-16(s0)"), Some(("-16", "s0")));
        assert_eq!(parse_mem("(a0)"), Some(("", "a0")));
        assert_eq!(parse_mem("%lo(buf)(t0)"), Some(("%lo(buf)", "t0")));
        assert_eq!(parse_mem("a0"), None);
    }
}
