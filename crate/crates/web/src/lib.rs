//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Every export takes assembly source and a hex key and returns a JSON
//! string. The `*_json` functions hold the logic so native tests can call
//! them without a JS runtime.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use keyflip::asm::{assemble, disassemble};
use keyflip::bench::{Percent, CORPUS};
use keyflip::obfuscate::{make_mask, obfuscate_image};
use keyflip::sim::{run, Limits, MicroArchConfig, RunOutput};
use keyflip::{HashSpec, ProgramImage, ProgramKey};

/// Keeps the page responsive: demo programs that spin forever stop here.
const DEMO_MAX_CYCLES: u64 = 5_000_000;
const MAX_SWEEP_LATENCY: u32 = 64;

fn limits() -> Limits {
    Limits { max_cycles: DEMO_MAX_CYCLES }
}

fn parse_inputs(source: &str, key: &str) -> Result<(ProgramImage, ProgramKey), String> {
    let key: ProgramKey = key.trim().parse().map_err(|e| format!("key: {e}"))?;
    let img = assemble(source).map_err(|e| e.to_string())?;
    Ok((img, key))
}

fn hash(latency: u32) -> Result<HashSpec, String> {
    HashSpec::new(latency).ok_or_else(|| "hash latency must be at least 1".to_string())
}

fn stats_json(out: &RunOutput) -> Value {
    let s = &out.stats;
    json!({
        "cycles": s.cycles,
        "retired": s.retired,
        "branches": s.branch_count,
        "taken_flushes": s.taken_flushes,
        "hash_stalls": s.hash_stall_cycles,
        "load_use_stalls": s.load_use_stalls,
        "cache_hits": s.cache_hits,
        "cache_misses": s.cache_misses,
        "exit_code": out.exit_code(),
        "output": String::from_utf8_lossy(&out.state.output),
    })
}

pub fn corpus_json() -> Value {
    Value::Array(CORPUS.iter().map(|b| json!({ "name": b.name, "source": b.source })).collect())
}

pub fn obfuscate_json(source: &str, key: &str) -> Result<Value, String> {
    let (img, key) = parse_inputs(source, key)?;
    let (obf, report) = obfuscate_image(&img, key).map_err(|e| e.to_string())?;
    let listing = |i: &ProgramImage| disassemble(i).map_err(|e| e.to_string());
    Ok(json!({
        "key_fingerprint": report.key_fingerprint,
        "total_branches": report.total_branches,
        "flipped": report.flipped,
        "flipped_addresses": report.flipped_addresses.iter().map(|a| format!("{a:08x}")).collect::<Vec<_>>(),
        "original": listing(&img)?,
        "obfuscated": listing(&obf)?,
    }))
}

/// Runs the original on the baseline core, then the obfuscated image on the
/// chosen trusted core (`stalled`, `cached` or `mask`) and, for contrast, on
/// the baseline core as an attacker would.
pub fn simulate_json(source: &str, key: &str, arch: &str, latency: u32, cache_lines: u32) -> Result<Value, String> {
    let (img, key) = parse_inputs(source, key)?;
    let (obf, _) = obfuscate_image(&img, key).map_err(|e| e.to_string())?;
    let config = match arch {
        "stalled" => MicroArchConfig::stalled(key, hash(latency)?),
        "cached" => MicroArchConfig::cached(key, hash(latency)?, cache_lines),
        "mask" => MicroArchConfig::masked(make_mask(&img, key).map_err(|e| e.to_string())?),
        other => return Err(format!("unknown arch `{other}`")),
    };
    let base = run(&img, &MicroArchConfig::baseline(), limits()).map_err(|e| e.to_string())?;
    let trusted = run(&obf, &config, limits()).map_err(|e| e.to_string())?;
    let attacker = match run(&obf, &MicroArchConfig::baseline(), limits()) {
        Ok(out) => {
            let same = out.trace.len() == base.trace.len()
                && out.trace.iter().zip(&base.trace).all(|(a, b)| a.path() == b.path());
            json!({ "result": stats_json(&out), "same_path": same })
        }
        Err(e) => json!({ "error": e.to_string(), "same_path": false }),
    };
    Ok(json!({
        "baseline": stats_json(&base),
        "trusted": stats_json(&trusted),
        "overhead_pct": Percent::overhead(trusted.stats.cycles, base.stats.cycles).to_string(),
        "attacker": attacker,
    }))
}

/// Cycle counts for latencies `1..=max_latency` on both hash-based cores.
pub fn sweep_json(source: &str, key: &str, max_latency: u32, cache_lines: u32) -> Result<Value, String> {
    let (img, key) = parse_inputs(source, key)?;
    let (obf, _) = obfuscate_image(&img, key).map_err(|e| e.to_string())?;
    let base = run(&img, &MicroArchConfig::baseline(), limits()).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for l in 1..=max_latency.clamp(1, MAX_SWEEP_LATENCY) {
        let stalled = run(&obf, &MicroArchConfig::stalled(key, hash(l)?), limits()).map_err(|e| e.to_string())?;
        let cached =
            run(&obf, &MicroArchConfig::cached(key, hash(l)?, cache_lines), limits()).map_err(|e| e.to_string())?;
        points.push(json!({
            "latency": l,
            "stalled": stalled.stats.cycles,
            "cached": cached.stats.cycles,
            "cache_misses": cached.stats.cache_misses,
        }));
    }
    Ok(json!({ "baseline": base.stats.cycles, "branches": base.stats.branch_count, "points": points }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn corpus() -> String {
    corpus_json().to_string()
}

#[wasm_bindgen]
pub fn obfuscate(source: &str, key: &str) -> Result<String, JsError> {
    to_js(obfuscate_json(source, key))
}

#[wasm_bindgen]
pub fn simulate(source: &str, key: &str, arch: &str, latency: u32, cache_lines: u32) -> Result<String, JsError> {
    to_js(simulate_json(source, key, arch, latency, cache_lines))
}

#[wasm_bindgen]
pub fn latency_sweep(source: &str, key: &str, max_latency: u32, cache_lines: u32) -> Result<String, JsError> {
    to_js(sweep_json(source, key, max_latency, cache_lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use keyflip::bench::{find, BENCH_KEY};

    #[test]
    fn obfuscate_lists_flips() {
        let v = obfuscate_json(find("fib").unwrap().source, BENCH_KEY).unwrap();
        assert_eq!(v["total_branches"], 3);
        let flipped = v["flipped"].as_u64().unwrap() as usize;
        assert_eq!(v["flipped_addresses"].as_array().unwrap().len(), flipped);
        assert!(v["obfuscated"].as_str().unwrap().contains(".entry"));
    }

    #[test]
    fn simulate_reports_overhead_and_attacker_path() {
        let src = find("branchy").unwrap().source;
        let v = simulate_json(src, BENCH_KEY, "stalled", 16, 256).unwrap();
        let base = v["baseline"]["cycles"].as_u64().unwrap();
        let branches = v["baseline"]["branches"].as_u64().unwrap();
        assert_eq!(v["trusted"]["cycles"].as_u64().unwrap(), base + 15 * branches);
        assert_eq!(v["trusted"]["exit_code"], v["baseline"]["exit_code"]);
        assert_eq!(v["attacker"]["same_path"], false);
        let mask = simulate_json(src, BENCH_KEY, "mask", 16, 256).unwrap();
        assert_eq!(mask["overhead_pct"], "0.00");
    }

    #[test]
    fn sweep_is_monotone_in_latency() {
        let v = sweep_json(find("sieve").unwrap().source, BENCH_KEY, 12, 256).unwrap();
        let points = v["points"].as_array().unwrap();
        assert_eq!(points.len(), 12);
        let stalled: Vec<u64> = points.iter().map(|p| p["stalled"].as_u64().unwrap()).collect();
        assert!(stalled.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(stalled[0], v["baseline"].as_u64().unwrap());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(obfuscate_json("nop", "123").is_err());
        assert!(simulate_json("bogus x1", BENCH_KEY, "stalled", 8, 256).is_err());
        assert!(simulate_json(find("fib").unwrap().source, BENCH_KEY, "warp", 8, 256).is_err());
        assert!(simulate_json(find("fib").unwrap().source, BENCH_KEY, "cached", 8, 100).is_err());
        assert_eq!(corpus_json().as_array().unwrap().len(), CORPUS.len());
    }
}
