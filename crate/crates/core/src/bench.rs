//! Bundled microbenchmark corpus and the architecture comparison report.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::asm::{assemble, AsmError};
use crate::isa::ProgramImage;
use crate::obfuscate::{make_mask, obfuscate_image, ObfError};
use crate::prf::{HashSpec, ProgramKey};
use crate::sim::{run, CycleStats, Limits, MicroArchConfig, SimError};

/// Key used for reproducible reports.
pub const BENCH_KEY: &str = "00112233445566778899aabbccddeeff";

pub fn bench_key() -> ProgramKey {
    BENCH_KEY.parse().expect("valid constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    /// Conditional branches every few instructions, none near a load.
    BranchDense,
    /// Few static branches executed many times, no cache index conflicts.
    LoopReuse,
    /// More static branches than hash cache lines.
    Mixed,
    /// No conditional branches at all.
    Branchless,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchSpec {
    pub name: &'static str,
    pub source: &'static str,
    pub tags: &'static [Tag],
    pub expected_exit: u32,
    pub expected_output: &'static [u8],
}

impl BenchSpec {
    pub fn has_tag(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn assemble(&self) -> Result<ProgramImage, AsmError> {
        assemble(self.source)
    }
}

pub const CORPUS: [BenchSpec; 6] = [
    BenchSpec {
        name: "fib",
        source: include_str!("../corpus/fib.s"),
        tags: &[Tag::LoopReuse],
        expected_exit: 8,
        expected_output: b"",
    },
    BenchSpec {
        name: "bubble_sort",
        source: include_str!("../corpus/bubble_sort.s"),
        tags: &[Tag::LoopReuse],
        expected_exit: 236,
        expected_output: b"\xec",
    },
    BenchSpec {
        name: "sieve",
        source: include_str!("../corpus/sieve.s"),
        tags: &[Tag::LoopReuse],
        expected_exit: 168,
        expected_output: b"",
    },
    BenchSpec {
        name: "matmul",
        source: include_str!("../corpus/matmul.s"),
        tags: &[Tag::Branchless],
        expected_exit: 187,
        expected_output: b"",
    },
    BenchSpec {
        name: "branchy",
        source: include_str!("../corpus/branchy.s"),
        tags: &[Tag::BranchDense, Tag::LoopReuse],
        expected_exit: 250,
        expected_output: b"",
    },
    BenchSpec {
        name: "dfa",
        source: include_str!("../corpus/dfa.s"),
        tags: &[Tag::Mixed],
        expected_exit: 62,
        expected_output: b"",
    },
];

pub fn find(name: &str) -> Option<&'static BenchSpec> {
    CORPUS.iter().find(|b| b.name == name)
}

/// The report's architecture columns. Baseline runs the original image;
/// every other variant runs the obfuscated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArchLabel {
    Baseline,
    Stalled8,
    Stalled16,
    Cached8,
    Cached16,
    Mask,
}

impl ArchLabel {
    pub const ALL: [ArchLabel; 6] = [
        ArchLabel::Baseline,
        ArchLabel::Stalled8,
        ArchLabel::Stalled16,
        ArchLabel::Cached8,
        ArchLabel::Cached16,
        ArchLabel::Mask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchLabel::Baseline => "baseline",
            ArchLabel::Stalled8 => "stalled-8",
            ArchLabel::Stalled16 => "stalled-16",
            ArchLabel::Cached8 => "cached-8",
            ArchLabel::Cached16 => "cached-16",
            ArchLabel::Mask => "mask",
        }
    }

    pub fn latency(self) -> Option<u32> {
        match self {
            ArchLabel::Stalled8 | ArchLabel::Cached8 => Some(8),
            ArchLabel::Stalled16 | ArchLabel::Cached16 => Some(16),
            ArchLabel::Baseline | ArchLabel::Mask => None,
        }
    }

    pub fn is_cached(self) -> bool {
        matches!(self, ArchLabel::Cached8 | ArchLabel::Cached16)
    }

    /// Core configuration for this column. `obfuscated` is the image the
    /// mask is derived from.
    pub fn config(
        self,
        key: ProgramKey,
        obfuscated: &ProgramImage,
        cache_lines: u32,
    ) -> Result<MicroArchConfig, ObfError> {
        let hash = |l| HashSpec::new(l).expect("positive latency");
        Ok(match self {
            ArchLabel::Baseline => MicroArchConfig::baseline(),
            ArchLabel::Stalled8 | ArchLabel::Stalled16 => MicroArchConfig::stalled(key, hash(self.latency().unwrap())),
            ArchLabel::Cached8 | ArchLabel::Cached16 => {
                MicroArchConfig::cached(key, hash(self.latency().unwrap()), cache_lines)
            }
            ArchLabel::Mask => MicroArchConfig::masked(make_mask(obfuscated, key)?),
        })
    }
}

impl fmt::Display for ArchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A percentage held as an exact count of hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Percent(pub i64);

impl Percent {
    /// `100 * (cycles - base) / base`, rounded half-even to two decimals.
    pub fn overhead(cycles: u64, base: u64) -> Percent {
        Percent::ratio(cycles as i128 - base as i128, base)
    }

    /// `100 * num / den`, rounded half-even to two decimals.
    pub fn ratio(num: i128, den: u64) -> Percent {
        assert!(den > 0, "zero denominator");
        let num = 10_000 * num;
        let den = den as i128;
        let (q, r) = (num.div_euclid(den), num.rem_euclid(den));
        let q = match (2 * r).cmp(&den) {
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal if q % 2 != 0 => q + 1,
            _ => q,
        };
        Percent(q as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowError {
    Assemble(String),
    Obfuscate(ObfError),
    Sim(SimError),
    /// The run finished but its exit code or output differs from the corpus entry.
    WrongResult {
        exit: u32,
    },
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowError::Assemble(e) => write!(f, "assemble: {e}"),
            RowError::Obfuscate(e) => write!(f, "obfuscate: {e}"),
            RowError::Sim(e) => write!(f, "simulate: {e}"),
            RowError::WrongResult { exit } => write!(f, "wrong result (exit {exit})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub benchmark: &'static str,
    pub arch: ArchLabel,
    pub result: Result<CycleStats, RowError>,
    /// Relative to the same benchmark's baseline row; `None` if either failed.
    pub overhead_pct: Option<Percent>,
}

impl ReportRow {
    /// Hits over probes, as a percentage; only for cached rows.
    pub fn hit_rate(&self) -> Option<Percent> {
        let s = self.result.as_ref().ok()?;
        let probes = s.cache_hits + s.cache_misses;
        (self.arch.is_cached() && probes > 0).then(|| Percent::ratio(s.cache_hits as i128, probes))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub key: ProgramKey,
    pub cache_lines: u32,
    pub limits: Limits,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { key: bench_key(), cache_lines: crate::sim::DEFAULT_CACHE_LINES, limits: Limits::default() }
    }
}

fn run_cell(spec: &BenchSpec, arch: ArchLabel, cfg: &BenchConfig) -> Result<CycleStats, RowError> {
    let img = spec.assemble().map_err(|e| RowError::Assemble(e.to_string()))?;
    let (obf, _) = obfuscate_image(&img, cfg.key).map_err(RowError::Obfuscate)?;
    let arch_cfg = arch.config(cfg.key, &obf, cfg.cache_lines).map_err(RowError::Obfuscate)?;
    let target = if arch == ArchLabel::Baseline { &img } else { &obf };
    let out = run(target, &arch_cfg, cfg.limits).map_err(RowError::Sim)?;
    if out.exit_code() != spec.expected_exit || out.state.output != spec.expected_output {
        return Err(RowError::WrongResult { exit: out.exit_code() });
    }
    Ok(out.stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Runs every (benchmark, arch) cell in parallel; rows come back ordered by
/// corpus position, then by [`ArchLabel::ALL`] order.
pub fn run_suite(specs: &[BenchSpec], cfg: &BenchConfig) -> Report {
    let cells: Vec<(usize, ArchLabel)> =
        (0..specs.len()).flat_map(|i| ArchLabel::ALL.into_iter().map(move |a| (i, a))).collect();
    let mut results: Vec<(usize, ArchLabel, Result<CycleStats, RowError>)> =
        cells.into_par_iter().map(|(i, a)| (i, a, run_cell(&specs[i], a, cfg))).collect();
    results.sort_by_key(|&(i, a, _)| (i, a));

    let mut rows = Vec::with_capacity(results.len());
    for chunk in results.chunk_by(|x, y| x.0 == y.0) {
        let base = chunk.iter().find(|c| c.1 == ArchLabel::Baseline).and_then(|c| c.2.as_ref().ok()).map(|s| s.cycles);
        for (i, arch, result) in chunk.iter().cloned() {
            let overhead_pct = match (&result, base) {
                (Ok(s), Some(b)) => Some(Percent::overhead(s.cycles, b)),
                _ => None,
            };
            rows.push(ReportRow { benchmark: specs[i].name, arch, result, overhead_pct });
        }
    }
    Report { rows }
}

pub const CSV_HEADER: &str = "benchmark,arch,cycles,retired,branches,overhead_pct,hash_stalls,cache_hits,cache_misses";

impl Report {
    pub fn row(&self, benchmark: &str, arch: ArchLabel) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.benchmark == benchmark && r.arch == arch)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.result.is_err())
    }

    /// Failed rows keep their benchmark and arch and put `failed` in the
    /// cycles column with the remaining fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            match &r.result {
                Ok(s) => {
                    let overhead = r.overhead_pct.map(|p| p.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        r.benchmark,
                        r.arch,
                        s.cycles,
                        s.retired,
                        s.branch_count,
                        overhead,
                        s.hash_stall_cycles,
                        s.cache_hits,
                        s.cache_misses
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{},{},failed,,,,,,", r.benchmark, r.arch);
                }
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| benchmark | arch | cycles | retired | branches | overhead % | hash stalls | cache hit % |\n\
             |---|---|---:|---:|---:|---:|---:|---:|\n",
        );
        for r in &self.rows {
            match &r.result {
                Ok(s) => {
                    let overhead = r.overhead_pct.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
                    let hit = r.hit_rate().map(|p| p.to_string()).unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} | {} | {} | {} |",
                        r.benchmark, r.arch, s.cycles, s.retired, s.branch_count, overhead, s.hash_stall_cycles, hit
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "| {} | {} | failed: {e} | | | | | |", r.benchmark, r.arch);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_half_even() {
        assert_eq!(Percent::overhead(9, 8).to_string(), "12.50");
        assert_eq!(Percent::overhead(100, 100).to_string(), "0.00");
        assert_eq!(Percent::overhead(160, 100).to_string(), "60.00");
        assert_eq!(Percent::overhead(2, 3).to_string(), "-33.33");
        assert_eq!(Percent::overhead(7, 8).to_string(), "-12.50");
        // ties in the third decimal: 0.005 -> 0.00, 0.015 -> 0.02, 0.025 -> 0.02
        assert_eq!(Percent::ratio(1, 20_000), Percent(0));
        assert_eq!(Percent::ratio(3, 20_000), Percent(2));
        assert_eq!(Percent::ratio(5, 20_000), Percent(2));
        assert_eq!(Percent::ratio(-1, 20_000), Percent(0));
        assert_eq!(Percent::ratio(-3, 20_000), Percent(-2));
        // not ties: 0.0051 -> 0.01
        assert_eq!(Percent::ratio(51, 1_000_000), Percent(1));
        assert_eq!(Percent::ratio(3, 4).to_string(), "75.00");
    }

    #[test]
    fn labels_are_distinct_and_ordered() {
        let names: Vec<_> = ArchLabel::ALL.iter().map(|a| a.as_str()).collect();
        assert_eq!(names, ["baseline", "stalled-8", "stalled-16", "cached-8", "cached-16", "mask"]);
    }

    #[test]
    fn corpus_assembles() {
        for spec in &CORPUS {
            spec.assemble().unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        }
    }

    #[test]
    fn corpus_covers_required_kinds() {
        for tag in [Tag::BranchDense, Tag::LoopReuse, Tag::Mixed, Tag::Branchless] {
            assert!(CORPUS.iter().any(|b| b.has_tag(tag)), "{tag:?}");
        }
        assert!(find("dfa").is_some());
        assert!(find("nope").is_none());
    }

    #[test]
    fn failed_row_is_marked_in_csv() {
        let report = Report {
            rows: vec![ReportRow {
                benchmark: "x",
                arch: ArchLabel::Mask,
                result: Err(RowError::Sim(SimError::MissingMask)),
                overhead_pct: None,
            }],
        };
        assert_eq!(report.to_csv(), format!("{CSV_HEADER}\nx,mask,failed,,,,,,\n"));
        assert!(report.to_markdown().contains("failed: simulate"));
    }
}
