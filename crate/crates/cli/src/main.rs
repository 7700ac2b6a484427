use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use keyflip::asm::{assemble, disassemble, load_image, save_image};
use keyflip::bench::{self, BenchConfig};
use keyflip::obfuscate::{first_pairing_mismatch, make_mask, obfuscate_image, MaskStream};
use keyflip::sim::{
    first_divergence, run, Limits, MicroArchConfig, RunOutput, SimError, DEFAULT_CACHE_LINES, DEFAULT_MAX_CYCLES,
};
use keyflip::{HashSpec, ProgramImage, ProgramKey};

#[derive(Parser)]
#[command(
    name = "keyflip",
    version,
    about = "Keyed branch-reversal obfuscation for RV32I and a pipeline model to run it"
)]
struct Cli {
    /// 128-bit program key as 32 hex digits.
    #[arg(long, global = true, value_name = "HEX32")]
    key: Option<ProgramKey>,
    /// Hash unit latency in cycles.
    #[arg(long, global = true, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    hash_latency: u32,
    /// Hash cache lines (power of two).
    #[arg(long, global = true, default_value_t = DEFAULT_CACHE_LINES)]
    cache_lines: u32,
    /// Give up after this many cycles (exit code 3).
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_CYCLES)]
    max_cycles: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a `.s` file into an image file.
    Asm {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Reverse the keyed branches; writes the image, its mask and a report.
    Obfuscate {
        /// `.s` source or image file.
        input: PathBuf,
        /// Obfuscated image (default: `<input>.obf.rvimg`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Mask sidecar (default: `<input>.mask`).
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a program on one core variant and print its cycle counters.
    Simulate {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Arch::Baseline)]
        arch: Arch,
        /// Mask file for `--arch mask`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write one line per retired instruction.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the bundled corpus on every core variant.
    Bench {
        /// CSV report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Markdown table path (always printed to stdout).
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Check that an obfuscated image pairs with its original under a key.
    Verify { original: PathBuf, obfuscated: PathBuf },
    /// Print a reassemblable listing of an image.
    Disasm {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arch {
    Baseline,
    Stalled,
    Cached,
    Mask,
}

enum Failure {
    Runtime(String),
    CycleLimit(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::CycleLimitExceeded { .. } => Failure::CycleLimit(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn fail(msg: impl Into<String>) -> Failure {
    Failure::Runtime(msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

/// Assembles `.s`/`.asm` files; anything else is read as an image file.
fn load_program(path: &Path) -> Result<ProgramImage, Failure> {
    let text = read(path)?;
    let is_source = matches!(path.extension().and_then(|e| e.to_str()), Some("s" | "asm" | "S"));
    if is_source {
        assemble(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
    } else {
        load_image(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
    }
}

fn sibling(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}{suffix}"))
}

fn require_key(cli: &Cli) -> ProgramKey {
    cli.key.unwrap_or_else(|| {
        Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, "this command needs --key <HEX32>").exit()
    })
}

fn hash_spec(cli: &Cli) -> HashSpec {
    HashSpec::new(cli.hash_latency).expect("clap enforces >= 1")
}

fn limits(cli: &Cli) -> Limits {
    Limits { max_cycles: cli.max_cycles }
}

fn cmd_asm(input: &Path, out: &Path) -> CmdResult {
    let img = load_program(input)?;
    write(out, &save_image(&img))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_obfuscate(
    cli: &Cli,
    input: &Path,
    out: Option<&Path>,
    mask_out: Option<&Path>,
    report_path: Option<&Path>,
) -> CmdResult {
    let key = require_key(cli);
    let img = load_program(input)?;
    let (obf, report) = obfuscate_image(&img, key).map_err(|e| fail(e.to_string()))?;
    let mask = make_mask(&img, key).map_err(|e| fail(e.to_string()))?;
    let out = out.map_or_else(|| sibling(input, ".obf.rvimg"), Path::to_path_buf);
    let mask_out = mask_out.map_or_else(|| sibling(input, ".mask"), Path::to_path_buf);
    write(&out, &save_image(&obf))?;
    write(&mask_out, &mask.to_file_string())?;
    let text = report.to_string();
    if let Some(path) = report_path {
        write(path, &text)?;
    }
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn arch_config(cli: &Cli, arch: Arch, mask: Option<&Path>, img: &ProgramImage) -> Result<MicroArchConfig, Failure> {
    let missing = |e: SimError| Failure::from(e);
    Ok(match arch {
        Arch::Baseline => MicroArchConfig::baseline(),
        Arch::Stalled => {
            MicroArchConfig::stalled(cli.key.ok_or_else(|| missing(SimError::MissingKey))?, hash_spec(cli))
        }
        Arch::Cached => MicroArchConfig::cached(
            cli.key.ok_or_else(|| missing(SimError::MissingKey))?,
            hash_spec(cli),
            cli.cache_lines,
        ),
        Arch::Mask => {
            let path = mask.ok_or_else(|| missing(SimError::MissingMask))?;
            let mask = MaskStream::from_file_str(&read(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))?;
            mask.validate(img).map_err(|e| missing(SimError::InvalidMask(e)))?;
            MicroArchConfig::masked(mask)
        }
    })
}

fn escape(bytes: &[u8]) -> String {
    bytes.escape_ascii().to_string()
}

fn cmd_simulate(cli: &Cli, input: &Path, arch: Arch, mask: Option<&Path>, trace: Option<&Path>) -> CmdResult {
    let img = load_program(input)?;
    let config = arch_config(cli, arch, mask, &img)?;
    let out = run(&img, &config, limits(cli))?;
    if let Some(path) = trace {
        let lines: String = out.trace.iter().map(|t| format!("{t}\n")).collect();
        write(path, &lines)?;
    }
    print!("{}", out.stats);
    println!("exit_code={}", out.exit_code());
    println!("output={}", escape(&out.state.output));
    Ok(ExitCode::from(out.exit_code() as u8))
}

fn cmd_bench(cli: &Cli, out: Option<&Path>, markdown: Option<&Path>) -> CmdResult {
    let cfg = BenchConfig {
        key: cli.key.unwrap_or_else(bench::bench_key),
        cache_lines: cli.cache_lines,
        limits: limits(cli),
    };
    if !cfg.cache_lines.is_power_of_two() {
        return Err(fail(format!("cache lines must be a power of two, got {}", cfg.cache_lines)));
    }
    let report = bench::run_suite(&bench::CORPUS, &cfg);
    let table = report.to_markdown();
    if let Some(path) = out {
        write(path, &report.to_csv())?;
    }
    if let Some(path) = markdown {
        write(path, &table)?;
    }
    print!("{table}");
    let mut failed = false;
    for row in report.failures() {
        failed = true;
        if let Err(e) = &row.result {
            eprintln!("{} {}: {e}", row.benchmark, row.arch);
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn cmd_verify(cli: &Cli, original: &Path, obfuscated: &Path) -> CmdResult {
    let key = require_key(cli);
    let orig = load_program(original)?;
    let obf = load_program(obfuscated)?;
    match first_pairing_mismatch(&orig, &obf, key).map_err(|e| fail(e.to_string()))? {
        Some(addr) => return Err(fail(format!("pairing mismatch at {addr:#010x}"))),
        None => println!("static: ok"),
    }
    let reference = run(&orig, &MicroArchConfig::baseline(), limits(cli))?;
    let trusted = [
        MicroArchConfig::stalled(key, hash_spec(cli)),
        MicroArchConfig::cached(key, hash_spec(cli), cli.cache_lines),
        MicroArchConfig::masked(make_mask(&orig, key).map_err(|e| fail(e.to_string()))?),
    ];
    for config in &trusted {
        let out = run(&obf, config, limits(cli))?;
        if let Some(msg) = differ(&reference, &out) {
            return Err(fail(format!("{}: {msg}", config.kind)));
        }
        println!("{}: ok ({} cycles)", config.kind, out.stats.cycles);
    }
    Ok(ExitCode::SUCCESS)
}

fn differ(reference: &RunOutput, out: &RunOutput) -> Option<String> {
    if let Some(i) = first_divergence(&reference.trace, &out.trace) {
        let pc = reference.trace.get(i).map_or(0, |t| t.pc);
        return Some(format!("trace diverges at index {i} (pc {pc:#010x})"));
    }
    if out.state.regs != reference.state.regs {
        return Some("final registers differ".into());
    }
    if out.state.output != reference.state.output {
        return Some("output differs".into());
    }
    (out.exit_code() != reference.exit_code()).then(|| "exit code differs".into())
}

fn cmd_disasm(input: &Path, out: Option<&Path>) -> CmdResult {
    let img = load_program(input)?;
    let text = disassemble(&img).map_err(|e| fail(e.to_string()))?;
    match out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Asm { input, out } => cmd_asm(input, out),
        Command::Obfuscate { input, out, mask_out, report } => {
            cmd_obfuscate(&cli, input, out.as_deref(), mask_out.as_deref(), report.as_deref())
        }
        Command::Simulate { input, arch, mask, trace } => {
            cmd_simulate(&cli, input, *arch, mask.as_deref(), trace.as_deref())
        }
        Command::Bench { out, markdown } => cmd_bench(&cli, out.as_deref(), markdown.as_deref()),
        Command::Verify { original, obfuscated } => cmd_verify(&cli, original, obfuscated),
        Command::Disasm { input, out } => cmd_disasm(input, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
        Err(Failure::CycleLimit(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
