//! Direct-mapped hash cache: one branch's hash bit per line.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Line {
    valid: bool,
    tag: u32,
    bit: bool,
}

/// `index(addr) = (addr >> 2) mod lines`, `tag(addr) = addr >> (2 + log2(lines))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCache {
    lines: Vec<Line>,
    index_bits: u32,
}

impl HashCache {
    /// `lines` must be a power of two.
    pub fn new(lines: u32) -> Option<Self> {
        lines
            .is_power_of_two()
            .then(|| HashCache { lines: vec![Line::default(); lines as usize], index_bits: lines.trailing_zeros() })
    }

    pub fn lines(&self) -> usize {
        self.lines.len()
    }

    pub fn index(&self, addr: u32) -> usize {
        ((addr >> 2) as usize) & (self.lines.len() - 1)
    }

    pub fn tag(&self, addr: u32) -> u32 {
        addr.checked_shr(2 + self.index_bits).unwrap_or(0)
    }

    /// Read-only lookup; `Some(bit)` on a hit.
    pub fn probe(&self, addr: u32) -> Option<bool> {
        let line = &self.lines[self.index(addr)];
        (line.valid && line.tag == self.tag(addr)).then_some(line.bit)
    }

    /// Installs `bit` for `addr`, evicting whatever occupied its line.
    pub fn fill(&mut self, addr: u32, bit: bool) {
        let (idx, tag) = (self.index(addr), self.tag(addr));
        self.lines[idx] = Line { valid: true, tag, bit };
    }
}
