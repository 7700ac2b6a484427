use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use keyflip::asm::assemble;
use keyflip::bench;
use keyflip::prf::{flip_set, ProgramKey};

const LISTING: &str = "
main:
    addi a1, zero, 4
    blt  a1, a0, .LBB0_2
    j    .LBB0_1
.LBB0_1:
    nop
    j    .LBB0_2
.LBB0_2:
    lw   a0, -16(s0)
    addi a1, zero, 13
    blt  a0, a1, .LBB0_4
    j    .LBB0_3
.LBB0_3:
    nop
.LBB0_4:
    li   a7, 93
    ecall
";

fn keyflip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyflip")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field(text: &str, name: &str) -> u64 {
    let prefix = format!("{name}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("{name} in {text}"))
}

fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus_file(dir: &Path, name: &str) -> PathBuf {
    put(dir, &format!("{name}.s"), bench::find(name).unwrap().source)
}

#[test]
fn obfuscate_reports_both_listing_branches() {
    let dir = tempfile::tempdir().unwrap();
    let src = put(dir.path(), "listing.s", LISTING);
    let img = assemble(LISTING).unwrap();
    let key = (0u128..).map(ProgramKey::from_u128).find(|&k| flip_set(k, &img).unwrap().len() == 2).unwrap();
    let out = keyflip(&["obfuscate", p(&src), "--key", &key.to_string()]);
    assert!(out.status.success(), "{out:?}");
    let report = stdout(&out);
    assert_eq!(field(&report, "flipped"), 2);
    assert_eq!(field(&report, "total_branches"), 2);
    assert!(dir.path().join("listing.obf.rvimg").exists());
    assert!(fs::read_to_string(dir.path().join("listing.mask")).unwrap().starts_with("RVMASK v1\n"));
}

#[test]
fn branchless_obfuscation_keeps_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "matmul");
    let plain = dir.path().join("plain.rvimg");
    let obf = dir.path().join("obf.rvimg");
    assert!(keyflip(&["asm", p(&src), "-o", p(&plain)]).status.success());
    let out = keyflip(&["obfuscate", p(&src), "--key", bench::BENCH_KEY, "-o", p(&obf)]);
    assert_eq!(field(&stdout(&out), "flipped"), 0);
    assert_eq!(fs::read(&plain).unwrap(), fs::read(&obf).unwrap());
}

#[test]
fn short_key_is_a_usage_error() {
    let out = keyflip(&["obfuscate", "x.s", "--key", "0011223344556677889900aabbccdde"]);
    assert_eq!(out.status.code(), Some(2));
    let out = keyflip(&["obfuscate", "x.s"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_exits_with_program_code() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "fib");
    let a = keyflip(&["simulate", p(&src), "--arch", "baseline"]);
    let b = keyflip(&["simulate", p(&src), "--arch", "baseline"]);
    assert_eq!(a.status.code(), Some(bench::find("fib").unwrap().expected_exit as i32));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(field(&stdout(&a), "cycles") > 0);
}

#[test]
fn stalled_simulation_matches_stall_formula() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "branchy");
    let obf = dir.path().join("branchy.obf.rvimg");
    let key = bench::BENCH_KEY;
    assert!(keyflip(&["obfuscate", p(&src), "--key", key, "-o", p(&obf)]).status.success());
    let base = stdout(&keyflip(&["simulate", p(&src)]));
    let stalled = stdout(&keyflip(&["simulate", p(&obf), "--arch", "stalled", "--key", key, "--hash-latency", "16"]));
    let n = field(&stalled, "branch_count");
    assert_eq!(field(&stalled, "cycles"), field(&base, "cycles") + n * 15);
}

#[test]
fn mask_arch_needs_a_mask() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "fib");
    let out = keyflip(&["simulate", p(&src), "--arch", "mask"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask"));
    let out = keyflip(&["simulate", p(&src), "--arch", "stalled"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mask_run_uses_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "sieve");
    let obf = dir.path().join("o.rvimg");
    let mask = dir.path().join("o.mask");
    let key = bench::BENCH_KEY;
    assert!(keyflip(&["obfuscate", p(&src), "--key", key, "-o", p(&obf), "--mask-out", p(&mask)]).status.success());
    let masked = keyflip(&["simulate", p(&obf), "--arch", "mask", "--mask", p(&mask)]);
    let base = keyflip(&["simulate", p(&src)]);
    assert_eq!(masked.status.code(), Some(168));
    assert_eq!(stdout(&masked), stdout(&base));
}

#[test]
fn cycle_limit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = put(dir.path(), "spin.s", "spin: j spin\n");
    let out = keyflip(&["simulate", p(&src), "--max-cycles", "1000"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn trace_lines_have_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let src = put(dir.path(), "t.s", "li t0, 1\nbnez t0, out\nnop\nout: li a7, 93\necall\n");
    let trace = dir.path().join("t.trace");
    let out = keyflip(&["simulate", p(&src), "--trace", p(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(" B taken d=0"), "{}", lines[1]);
    let first: Vec<&str> = lines[0].split(' ').collect();
    assert_eq!(first.len(), 3);
    assert_eq!(first[1], "00001000");
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let md = dir.path().join("report.md");
    let out = keyflip(&["bench", "--out", p(&csv), "--markdown", p(&md)]);
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(
        text.starts_with("benchmark,arch,cycles,retired,branches,overhead_pct,hash_stalls,cache_hits,cache_misses\n")
    );
    assert_eq!(text.lines().count(), 1 + 6 * 6);
    assert_eq!(fs::read_to_string(&md).unwrap(), stdout(&out));
}

#[test]
fn verify_accepts_fresh_pair_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "dfa");
    let orig = dir.path().join("dfa.rvimg");
    let obf = dir.path().join("dfa.obf.rvimg");
    let key = bench::BENCH_KEY;
    assert!(keyflip(&["asm", p(&src), "-o", p(&orig)]).status.success());
    let report = stdout(&keyflip(&["obfuscate", p(&src), "--key", key, "-o", p(&obf)]));
    assert!(field(&report, "flipped") >= 8);
    let ok = keyflip(&["verify", p(&orig), p(&obf), "--key", key]);
    assert_eq!(ok.status.code(), Some(0), "{ok:?}");

    let wrong = keyflip(&["verify", p(&orig), p(&obf), "--key", "ffeeddccbbaa99887766554433221100"]);
    assert_eq!(wrong.status.code(), Some(1));

    // Put one flipped branch back to its original encoding.
    let addrs = report.lines().find_map(|l| l.strip_prefix("flipped_addresses=")).unwrap();
    let victim = addrs.split(',').next().unwrap();
    let orig_text = fs::read_to_string(&orig).unwrap();
    let obf_text = fs::read_to_string(&obf).unwrap();
    let idx = (u32::from_str_radix(victim, 16).unwrap() - 0x1000) as usize / 4;
    let header = 4;
    let mut lines: Vec<&str> = obf_text.lines().collect();
    lines[header + idx] = orig_text.lines().nth(header + idx).unwrap();
    let tampered = put(dir.path(), "tampered.rvimg", &(lines.join("\n") + "\n"));
    let bad = keyflip(&["verify", p(&orig), p(&tampered), "--key", key]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains(&format!("0x{victim}")), "{bad:?}");
}

#[test]
fn disasm_output_reassembles() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_file(dir.path(), "bubble_sort");
    let listing = dir.path().join("b.s");
    assert!(keyflip(&["disasm", p(&src), "-o", p(&listing)]).status.success());
    let again = assemble(&fs::read_to_string(&listing).unwrap()).unwrap();
    assert_eq!(again, assemble(bench::find("bubble_sort").unwrap().source).unwrap());
}
