use super::*;
use crate::asm::assemble;
use crate::obfuscate::{make_mask, obfuscate_image};
use crate::prf::hash_bit;

const EXIT0: &str = "li a0, 0\nli a7, 93\necall\n";

fn key() -> ProgramKey {
    "00112233445566778899aabbccddeeff".parse().unwrap()
}

fn latency(l: u32) -> HashSpec {
    HashSpec::new(l).unwrap()
}

fn all_archs(img: &ProgramImage, key: ProgramKey) -> Vec<MicroArchConfig> {
    vec![
        MicroArchConfig::baseline(),
        MicroArchConfig::stalled(key, latency(8)),
        MicroArchConfig::cached(key, latency(8), 256),
        MicroArchConfig::masked(make_mask(img, key).unwrap()),
    ]
}

fn cycles(img: &ProgramImage, arch: &MicroArchConfig) -> CycleStats {
    run(img, arch, Limits::default()).unwrap().stats
}

#[test]
fn empty_program_on_every_arch() {
    let img = assemble(EXIT0).unwrap();
    for arch in all_archs(&img, key()) {
        let out = run(&img, &arch, Limits::default()).unwrap();
        assert_eq!(out.stats.retired, 3);
        assert_eq!(out.exit_code(), 0);
        // three instructions drain through seven stages
        assert_eq!(out.stats.cycles, 3 + 6);
    }
}

#[test]
fn taken_branch_costs_three_cycles() {
    let not_taken = assemble("bne x0, x0, next\nnext: li a0, 0\nli a7, 93\necall\n").unwrap();
    let taken = assemble("beq x0, x0, next\nnext: li a0, 0\nli a7, 93\necall\n").unwrap();
    let base = MicroArchConfig::baseline();
    let a = cycles(&not_taken, &base);
    let b = cycles(&taken, &base);
    assert_eq!(a.cycles, 4 + 6);
    assert_eq!(b.cycles, a.cycles + 3);
    assert_eq!(b.taken_flushes, 1);
    assert_eq!(a.branch_count, 1);
}

#[test]
fn load_use_stalls() {
    let base = MicroArchConfig::baseline();
    let data = ".data\nv: .word 5\n";
    let adjacent = assemble(&format!("la t0, v\nlw t1, 0(t0)\naddi a0, t1, 0\nli a7, 93\necall\n{data}")).unwrap();
    let gap1 = assemble(&format!("la t0, v\nlw t1, 0(t0)\nnop\naddi a0, t1, 0\nli a7, 93\necall\n{data}")).unwrap();
    let gap2 =
        assemble(&format!("la t0, v\nlw t1, 0(t0)\nnop\nnop\naddi a0, t1, 0\nli a7, 93\necall\n{data}")).unwrap();
    let s0 = run(&adjacent, &base, Limits::default()).unwrap();
    let s1 = cycles(&gap1, &base);
    let s2 = cycles(&gap2, &base);
    assert_eq!(s0.exit_code(), 5);
    assert_eq!(s0.stats.load_use_stalls, 2);
    assert_eq!(s0.stats.cycles, 6 + 6 + 2);
    assert_eq!(s1.load_use_stalls, 1);
    assert_eq!(s1.cycles, 7 + 6 + 1);
    assert_eq!(s2.load_use_stalls, 0);
    assert_eq!(s2.cycles, 8 + 6);
}

/// Cycle in which the instruction at `pc` first occupies `stage`, and how
/// many cycles it stays there.
fn occupancy(img: &ProgramImage, arch: &MicroArchConfig, pc: u32, stage: Stage) -> Vec<(u64, u64)> {
    let mut p = Pipeline::new(img, arch, Limits::default()).unwrap();
    let mut spans: Vec<(u64, u64)> = Vec::new();
    let mut inside = false;
    while !p.is_halted() {
        let c = p.cycle();
        let here = p.stage(stage).is_some_and(|v| v.pc == pc);
        if here && !inside {
            spans.push((c, 0));
        }
        if here {
            spans.last_mut().unwrap().1 += 1;
        }
        inside = here;
        p.step_cycle().unwrap();
    }
    spans
}

#[test]
fn stalled_branch_waits_for_hash_in_ex() {
    // nop; nop; bne (not taken); exit
    let plain = assemble(&format!("nop\nnop\nbne x0, x0, out\nout: {EXIT0}")).unwrap();
    let (img, _) = obfuscate_image(&plain, key()).unwrap();
    let branch_pc = img.addr_of(2);
    for l in [1u32, 2, 8, 16] {
        let arch = MicroArchConfig::stalled(key(), latency(l));
        let id = occupancy(&img, &arch, branch_pc, Stage::Id);
        let ex = occupancy(&img, &arch, branch_pc, Stage::Ex);
        let ma1 = occupancy(&img, &arch, branch_pc, Stage::Ma1);
        let t = id[0].0;
        assert_eq!(id, vec![(t, 1)]);
        // in EX for cycles t+1 ..= t+L, i.e. L-1 cycles beyond the unstalled one
        assert_eq!(ex, vec![(t + 1, l as u64)], "L={l}");
        assert_eq!(ma1[0].0, t + l as u64 + 1);
        let stats = cycles(&img, &arch);
        assert_eq!(stats.hash_stall_cycles, l as u64 - 1);
        assert_eq!(stats.cycles, cycles(&plain, &MicroArchConfig::baseline()).cycles + l as u64 - 1);
    }
}

#[test]
fn cached_hit_has_no_extra_occupancy() {
    // The branch runs twice: cold miss, then a hit.
    let src = format!("li t0, 2\nloop: addi t0, t0, -1\nnop\nbnez t0, loop\n{EXIT0}");
    let img = assemble(&src).unwrap();
    let (obf, _) = obfuscate_image(&img, key()).unwrap();
    let branch_pc = img.addr_of(3);
    let arch = MicroArchConfig::cached(key(), latency(8), 256);
    let ex = occupancy(&obf, &arch, branch_pc, Stage::Ex);
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].1, 8);
    assert_eq!(ex[1].1, 1);
    let stats = cycles(&obf, &arch);
    assert_eq!((stats.cache_misses, stats.cache_hits), (1, 1));
    assert_eq!(stats.hash_stall_cycles, 7);
}

#[test]
fn non_branch_stream_identical_across_archs() {
    let img = assemble("li t0, 7\naddi t1, t0, 3\nla t2, buf\nsw t1, 0(t2)\nlw t3, 0(t2)\nadd a0, t3, t3\nli a7, 93\necall\n.data\nbuf: .word 0\n").unwrap();
    let archs = all_archs(&img, key());
    let mut pipes: Vec<Pipeline> = archs.iter().map(|a| Pipeline::new(&img, a, Limits::default()).unwrap()).collect();
    while !pipes[0].is_halted() {
        let views: Vec<_> = Stage::ALL.iter().map(|&s| pipes[0].stage(s)).collect();
        for p in &pipes[1..] {
            let other: Vec<_> = Stage::ALL.iter().map(|&s| p.stage(s)).collect();
            assert_eq!(views, other);
        }
        for p in &mut pipes {
            p.step_cycle().unwrap();
        }
    }
    assert!(pipes.iter().all(|p| p.is_halted() && p.state().exit_code == Some(20)));
}

#[test]
fn branch_dense_loop_stall_formula() {
    // One conditional branch per iteration, no loads near it.
    let n = 50u64;
    let src = format!("li t0, {n}\nloop: addi t0, t0, -1\naddi t1, t1, 3\nbnez t0, loop\n{EXIT0}");
    let img = assemble(&src).unwrap();
    let base = cycles(&img, &MicroArchConfig::baseline());
    assert_eq!(base.branch_count, n);
    for l in [8u32, 16] {
        let (obf, _) = obfuscate_image(&img, key()).unwrap();
        let s = cycles(&obf, &MicroArchConfig::stalled(key(), latency(l)));
        assert_eq!(s.cycles - base.cycles, n * (l as u64 - 1));
        assert_eq!(s.hash_stall_cycles, n * (l as u64 - 1));
        let cached = cycles(&obf, &MicroArchConfig::cached(key(), latency(l), 256));
        assert_eq!(cached.cache_misses, 1);
        assert_eq!(cached.cycles - base.cycles, l as u64 - 1);
    }
}

#[test]
fn obfuscated_runs_match_original() {
    let src = "li t0, 10\nli a0, 0\nloop: andi t1, t0, 1\nbeqz t1, even\naddi a0, a0, 3\nj next\neven: addi a0, a0, 1\nnext: addi t0, t0, -1\nbgtz t0, loop\nli a7, 64\necall\nli a7, 93\necall\n";
    let img = assemble(src).unwrap();
    let reference = run(&img, &MicroArchConfig::baseline(), Limits::default()).unwrap();
    for k in 0..20u64 {
        let key = ProgramKey::new(k.wrapping_mul(0x9e37), k);
        let (obf, _) = obfuscate_image(&img, key).unwrap();
        for arch in all_archs(&img, key).into_iter().skip(1) {
            let out = run(&obf, &arch, Limits::default()).unwrap();
            assert_eq!(first_divergence(&reference.trace, &out.trace), None);
            assert_eq!(out.state.regs, reference.state.regs);
            assert_eq!(out.state.output, reference.state.output);
            assert_eq!(out.exit_code(), 20);
        }
    }
}

#[test]
fn cache_conflicts_evict() {
    // Two branches 256 words apart share a line and alternate.
    let mut src = String::from("li t0, 4\nloop: addi t0, t0, -1\nnop\nbeq x0, x1, 8\nnop\n");
    for _ in 0..256 - 2 {
        src.push_str("nop\n");
    }
    src.push_str("bnez t0, loop\n");
    src.push_str(EXIT0);
    let img = assemble(&src).unwrap();
    let (img, _) = obfuscate_image(&img, key()).unwrap();
    let a = img.addr_of(3);
    let b = img.addr_of(3 + 256);
    let cache = HashCache::new(256).unwrap();
    assert_eq!(cache.index(a), cache.index(b));
    let out = run(&img, &MicroArchConfig::cached(key(), latency(8), 256), Limits::default()).unwrap();
    assert_eq!(out.stats.branch_count, 8);
    assert_eq!(out.stats.cache_misses, 8);
    let wide = run(&img, &MicroArchConfig::cached(key(), latency(8), 512), Limits::default()).unwrap();
    assert_eq!(wide.stats.cache_misses, 2);
}

#[test]
fn configuration_errors() {
    let img = assemble(EXIT0).unwrap();
    let mut stalled = MicroArchConfig::stalled(key(), latency(8));
    stalled.key = None;
    assert_eq!(run(&img, &stalled, Limits::default()).unwrap_err(), SimError::MissingKey);
    let mut mask = MicroArchConfig::masked(make_mask(&img, key()).unwrap());
    mask.mask = None;
    assert_eq!(run(&img, &mask, Limits::default()).unwrap_err(), SimError::MissingMask);
    let other = assemble("nop\nnop\n").unwrap();
    let wrong = MicroArchConfig::masked(make_mask(&other, key()).unwrap());
    assert!(matches!(run(&img, &wrong, Limits::default()), Err(SimError::InvalidMask(_))));
    let odd = MicroArchConfig::cached(key(), latency(8), 100);
    assert!(matches!(run(&img, &odd, Limits::default()), Err(SimError::InvalidConfig(_))));
}

#[test]
fn cycle_limit() {
    let img = assemble("spin: j spin\n").unwrap();
    let err = run(&img, &MicroArchConfig::baseline(), Limits { max_cycles: 1000 }).unwrap_err();
    assert_eq!(err, SimError::CycleLimitExceeded { limit: 1000 });
}

#[test]
fn faults_only_on_the_executed_path() {
    let img = assemble("j bad\nbad: .word 0xffffffff\n").unwrap();
    let err = run(&img, &MicroArchConfig::baseline(), Limits::default()).unwrap_err();
    assert_eq!(err, SimError::UnsupportedInstruction { addr: img.addr_of(1), word: 0xffff_ffff });
    let off_end = assemble("nop\n").unwrap();
    let err = run(&off_end, &MicroArchConfig::baseline(), Limits::default()).unwrap_err();
    assert_eq!(err, SimError::MemFault { addr: off_end.addr_of(1) });
    // A bad word right after a taken jump is fetched but never executed.
    let skipped = assemble(&format!("j ok\n.word 0xffffffff\nok: {EXIT0}")).unwrap();
    assert!(run(&skipped, &MicroArchConfig::baseline(), Limits::default()).is_ok());
}

#[test]
fn baseline_diverges_on_obfuscated_image() {
    let src = format!("li t0, 5\nloop: addi t0, t0, -1\nnop\nbnez t0, loop\n{EXIT0}");
    let img = assemble(&src).unwrap();
    let branch = img.addr_of(3);
    let key = (0u64..).map(|i| ProgramKey::new(i, 1)).find(|&k| hash_bit(k, branch)).unwrap();
    let (obf, _) = obfuscate_image(&img, key).unwrap();
    let orig = run(&img, &MicroArchConfig::baseline(), Limits::default()).unwrap();
    let attacked = run(&obf, &MicroArchConfig::baseline(), Limits::default()).unwrap();
    let first = orig.trace.iter().position(|e| e.pc == branch).unwrap();
    assert_eq!(first_divergence(&orig.trace, &attacked.trace), Some(first));
}

#[test]
fn trace_line_format() {
    let e =
        TraceEntry { cycle: 12, pc: 0x1008, word: 0x00a5c463, branch: Some(BranchEvent { taken: false, flip: true }) };
    assert_eq!(e.to_string(), "12 00001008 00a5c463 B not-taken d=1");
    let n = TraceEntry { cycle: 3, pc: 0x1000, word: 0x13, branch: None };
    assert_eq!(n.to_string(), "3 00001000 00000013");
}

#[test]
fn stats_block() {
    let img = assemble(EXIT0).unwrap();
    let text = cycles(&img, &MicroArchConfig::baseline()).to_string();
    assert!(text.starts_with("cycles=9\nretired=3\n"));
    assert!(text.contains("cache_misses=0"));
}
