use crate::isa::{decode, Instruction, ProgramImage};
use crate::prf::hash_bit;

use super::{
    ArchKind, BranchEvent, CycleStats, HashCache, Limits, MachineState, MicroArchConfig, RunOutput, SimError,
    TraceEntry,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    If1,
    If2,
    Id,
    Ex,
    Ma1,
    Ma2,
    Wb,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::If1, Stage::If2, Stage::Id, Stage::Ex, Stage::Ma1, Stage::Ma2, Stage::Wb];
}

const IF1: usize = 0;
const IF2: usize = 1;
const ID: usize = 2;
const EX: usize = 3;
const MA1: usize = 4;
const MA2: usize = 5;
const WB: usize = 6;

/// Load results reach consumers this many cycles after the load's EX cycle.
const LOAD_TO_USE: u64 = 3;

#[derive(Debug, Clone, Copy)]
enum Fetched {
    Instr {
        word: u32,
        instr: Instruction,
    },
    BadWord {
        word: u32,
    },
    /// Fetch outside the code segment. Harmless unless it reaches EX.
    Fault,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    pc: u32,
    fetched: Fetched,
    /// First cycle in which the hash bit is usable in EX.
    hash_ready: u64,
    /// CachedHash probe result taken at ID entry.
    cached: Option<bool>,
    executed: bool,
    branch: Option<BranchEvent>,
    halts: bool,
}

impl Slot {
    fn instr(&self) -> Option<&Instruction> {
        match &self.fetched {
            Fetched::Instr { instr, .. } => Some(instr),
            _ => None,
        }
    }

    fn word(&self) -> Option<u32> {
        match self.fetched {
            Fetched::Instr { word, .. } | Fetched::BadWord { word } => Some(word),
            Fetched::Fault => None,
        }
    }
}

/// Read-only view of one pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageView {
    pub pc: u32,
    pub word: Option<u32>,
    pub executed: bool,
}

/// Cycle-stepped pipeline state. [`Pipeline::step_cycle`] advances exactly
/// one clock.
pub struct Pipeline<'a> {
    img: &'a ProgramImage,
    arch: &'a MicroArchConfig,
    limits: Limits,
    decoded: Vec<Fetched>,
    state: MachineState,
    stages: [Option<Slot>; 7],
    fetch_pc: u32,
    fetching: bool,
    cycle: u64,
    ready_at: [u64; 32],
    cache: Option<HashCache>,
    stats: CycleStats,
    trace: Vec<TraceEntry>,
    done: bool,
}

impl<'a> Pipeline<'a> {
    pub fn new(img: &'a ProgramImage, arch: &'a MicroArchConfig, limits: Limits) -> Result<Self, SimError> {
        arch.validate(img)?;
        let decoded = img
            .code()
            .iter()
            .map(|&word| match decode(word) {
                Ok(instr) => Fetched::Instr { word, instr },
                Err(_) => Fetched::BadWord { word },
            })
            .collect();
        let cache = match arch.kind {
            ArchKind::CachedHash => Some(HashCache::new(arch.cache_lines).expect("validated")),
            _ => None,
        };
        let mut p = Pipeline {
            img,
            arch,
            limits,
            decoded,
            state: MachineState::new(img),
            stages: [None; 7],
            fetch_pc: img.entry(),
            fetching: true,
            cycle: 1,
            ready_at: [0; 32],
            cache,
            stats: CycleStats::default(),
            trace: Vec::new(),
            done: false,
        };
        p.stages[IF1] = Some(p.fetch(img.entry()));
        Ok(p)
    }

    fn fetch(&mut self, pc: u32) -> Slot {
        self.fetch_pc = pc.wrapping_add(4);
        let fetched = self.img.index_of(pc).map_or(Fetched::Fault, |i| self.decoded[i]);
        Slot { pc, fetched, hash_ready: 0, cached: None, executed: false, branch: None, halts: false }
    }

    fn enter_id(&mut self, slot: &mut Slot, cycle: u64) {
        if !self.arch.kind.uses_hash() || !slot.instr().is_some_and(Instruction::is_branch) {
            return;
        }
        slot.hash_ready = cycle + self.arch.hash.latency() as u64;
        if let Some(cache) = &self.cache {
            slot.cached = cache.probe(slot.pc);
        }
    }

    /// The cycle number the next [`Pipeline::step_cycle`] call simulates.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn stage(&self, stage: Stage) -> Option<StageView> {
        self.stages[stage as usize].map(|s| StageView { pc: s.pc, word: s.word(), executed: s.executed })
    }

    pub fn is_halted(&self) -> bool {
        self.done
    }

    pub fn stats(&self) -> &CycleStats {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    pub fn cache(&self) -> Option<&HashCache> {
        self.cache.as_ref()
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput { state: self.state, stats: self.stats, trace: self.trace }
    }

    /// Reversal bit for the branch in EX, or `None` while its hash is pending.
    fn reversal_bit(&self, slot: &Slot, cycle: u64) -> Option<bool> {
        let key = || self.arch.key.expect("validated");
        match self.arch.kind {
            ArchKind::Baseline => Some(false),
            ArchKind::MaskBased => Some(self.arch.mask.as_ref().expect("validated").bit_at(slot.pc)),
            ArchKind::CachedHash if slot.cached.is_some() => slot.cached,
            ArchKind::StalledHash | ArchKind::CachedHash => {
                (cycle >= slot.hash_ready).then(|| hash_bit(key(), slot.pc))
            }
        }
    }

    /// Advances one clock cycle.
    pub fn step_cycle(&mut self) -> Result<(), SimError> {
        if self.done {
            return Ok(());
        }
        let c = self.cycle;
        if c > self.limits.max_cycles {
            return Err(SimError::CycleLimitExceeded { limit: self.limits.max_cycles });
        }
        self.stats.cycles = c;

        if let Some(slot) = self.stages[WB].take() {
            self.stats.retired += 1;
            self.trace.push(TraceEntry { cycle: c, pc: slot.pc, word: slot.word().unwrap_or(0), branch: slot.branch });
            if slot.halts {
                self.done = true;
                self.cycle += 1;
                return Ok(());
            }
        }

        let mut ex_stalled = false;
        let mut redirect = None;
        let mut halt = false;
        if let Some(mut slot) = self.stages[EX].filter(|s| !s.executed) {
            let instr = match slot.fetched {
                Fetched::Instr { instr, .. } => instr,
                Fetched::BadWord { word } => return Err(SimError::UnsupportedInstruction { addr: slot.pc, word }),
                Fetched::Fault => return Err(SimError::MemFault { addr: slot.pc }),
            };
            let flip = if instr.is_branch() { self.reversal_bit(&slot, c) } else { Some(false) };
            match flip {
                None => {
                    ex_stalled = true;
                    self.stats.hash_stall_cycles += 1;
                }
                Some(flip) => {
                    let done = self.state.execute(slot.pc, &instr, flip)?;
                    slot.executed = true;
                    if let Some((_, taken)) = done.branch {
                        self.stats.branch_count += 1;
                        self.stats.taken_flushes += taken as u64;
                        slot.branch = Some(BranchEvent { taken, flip });
                        if let Some(cache) = &mut self.cache {
                            if slot.cached.is_some() {
                                self.stats.cache_hits += 1;
                            } else {
                                self.stats.cache_misses += 1;
                                cache.fill(slot.pc, flip);
                            }
                        }
                    } else if done.redirect {
                        self.stats.jump_flushes += 1;
                    }
                    if done.redirect {
                        redirect = Some(done.next_pc);
                    }
                    if done.halt {
                        halt = true;
                        slot.halts = true;
                    }
                    if let Some(rd) = instr.dest() {
                        let load = matches!(instr, Instruction::Load { .. });
                        self.ready_at[rd.index()] = if load { c + LOAD_TO_USE } else { 0 };
                    }
                    self.stages[EX] = Some(slot);
                }
            }
        }

        let flushing = redirect.is_some() || halt;
        let id_stalled = !ex_stalled
            && !flushing
            && self.stages[ID]
                .as_ref()
                .and_then(Slot::instr)
                .is_some_and(|instr| instr.sources().into_iter().flatten().any(|r| self.ready_at[r.index()] > c + 1));
        if id_stalled {
            self.stats.load_use_stalls += 1;
        }

        self.stages[WB] = self.stages[MA2].take();
        self.stages[MA2] = self.stages[MA1].take();
        if !ex_stalled {
            self.stages[MA1] = self.stages[EX].take();
            if flushing {
                self.stages[ID] = None;
                self.stages[IF2] = None;
                self.stages[IF1] = None;
                match redirect {
                    Some(target) => self.stages[IF1] = Some(self.fetch(target)),
                    None => self.fetching = false,
                }
            } else if !id_stalled {
                self.stages[EX] = self.stages[ID].take();
                if let Some(mut slot) = self.stages[IF2].take() {
                    self.enter_id(&mut slot, c + 1);
                    self.stages[ID] = Some(slot);
                }
                self.stages[IF2] = self.stages[IF1].take();
                if self.fetching {
                    self.stages[IF1] = Some(self.fetch(self.fetch_pc));
                }
            }
        }
        self.cycle += 1;
        Ok(())
    }

    /// Steps until the exit ECALL retires; returns its exit code.
    pub fn run(&mut self) -> Result<u32, SimError> {
        while !self.done {
            self.step_cycle()?;
        }
        Ok(self.state.exit_code.expect("halted"))
    }
}
