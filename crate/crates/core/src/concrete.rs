//! Reference concrete semantics of the instruction set.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Instruction, MemOperand, Operand, Program, Reg};

/// Width in bytes of every `ldr`/`str`.
pub const ACCESS_BYTES: u8 = 8;

/// The memory window an experiment may touch: `[base, base + size)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRegion {
    pub base: u64,
    pub size: u64,
}

impl MemRegion {
    /// The default experiment window, 2 MiB at `0x8000_0000`.
    pub const DEFAULT: MemRegion = MemRegion { base: 0x8000_0000, size: 0x20_0000 };

    pub fn new(base: u64, size: u64) -> Self {
        MemRegion { base, size }
    }

    pub fn end(&self) -> u64 {
        self.base.wrapping_add(self.size)
    }

    /// Whether an access of `width` bytes at `addr` lies inside the window.
    pub fn contains(&self, addr: u64, width: u8) -> bool {
        addr >= self.base
            && addr.checked_add(width as u64).is_some_and(|e| e <= self.end())
            && self.end() >= self.base
    }

    /// Well-defined = inside the window and naturally aligned.
    pub fn well_defined(&self, addr: u64, width: u8) -> bool {
        self.contains(addr, width) && addr.is_multiple_of(width as u64)
    }
}

impl Default for MemRegion {
    fn default() -> Self {
        MemRegion::DEFAULT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemOp {
    Rd,
    Wt,
}

impl MemOp {
    /// 1-bit encoding used inside observations.
    pub fn bit(self) -> u64 {
        match self {
            MemOp::Rd => 0,
            MemOp::Wt => 1,
        }
    }
}

/// One data memory access performed by an instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemEvent {
    pub op: MemOp,
    pub addr: u64,
    pub width: u8,
    pub pc: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ExecError {
    #[error("access to unmapped address {addr:#x} at instruction {pc}")]
    UnmappedAccess { addr: u64, pc: usize },
    #[error("misaligned {width}-byte access to {addr:#x} at instruction {pc}")]
    Misaligned { addr: u64, width: u8, pc: usize },
    #[error("program counter {pc} outside the program")]
    PcOutOfRange { pc: usize },
}

/// Architectural state: registers, the Z/N flags, byte memory and the pc.
///
/// Absent memory bytes read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcreteState {
    pub regs: [u64; 31],
    pub z: bool,
    pub n: bool,
    pub mem: BTreeMap<u64, u8>,
    pub pc: usize,
}

impl ConcreteState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reg(mut self, r: Reg, v: u64) -> Self {
        self.set_reg(r, v);
        self
    }

    pub fn reg(&self, r: Reg) -> u64 {
        match r {
            Reg::X(n) => self.regs[n as usize],
            Reg::Xzr => 0,
        }
    }

    pub fn set_reg(&mut self, r: Reg, v: u64) {
        if let Reg::X(n) = r {
            self.regs[n as usize] = v;
        }
    }

    pub fn read_byte(&self, addr: u64) -> u8 {
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    /// Little-endian read of `width` bytes.
    pub fn read(&self, addr: u64, width: u8) -> u64 {
        (0..width as u64).fold(0u64, |acc, k| {
            acc | (self.read_byte(addr.wrapping_add(k)) as u64) << (8 * k)
        })
    }

    pub fn write(&mut self, addr: u64, width: u8, value: u64) {
        for k in 0..width as u64 {
            self.mem.insert(addr.wrapping_add(k), (value >> (8 * k)) as u8);
        }
    }

    fn operand(&self, op: Operand) -> u64 {
        match op {
            Operand::Reg(r) => self.reg(r),
            Operand::Imm(v) => v,
        }
    }

    fn address(&self, mem: &MemOperand) -> u64 {
        self.reg(mem.base).wrapping_add(mem.displacement() as u64)
    }
}

fn check_access(region: &MemRegion, addr: u64, pc: usize) -> Result<(), ExecError> {
    if !region.contains(addr, ACCESS_BYTES) {
        return Err(ExecError::UnmappedAccess { addr, pc });
    }
    if !addr.is_multiple_of(ACCESS_BYTES as u64) {
        return Err(ExecError::Misaligned { addr, width: ACCESS_BYTES, pc });
    }
    Ok(())
}

/// Executes the instruction at `state.pc`, returning the memory access it made.
pub fn concrete_step(
    state: &mut ConcreteState,
    program: &Program,
    region: &MemRegion,
) -> Result<Option<MemEvent>, ExecError> {
    let pc = state.pc;
    let insn = program.0.get(pc).ok_or(ExecError::PcOutOfRange { pc })?;
    let mut next = pc + 1;
    let mut event = None;
    match *insn {
        Instruction::Ldr { rt, addr } => {
            let a = state.address(&addr);
            check_access(region, a, pc)?;
            let v = state.read(a, ACCESS_BYTES);
            state.set_reg(rt, v);
            event = Some(MemEvent { op: MemOp::Rd, addr: a, width: ACCESS_BYTES, pc });
        }
        Instruction::Str { rt, addr } => {
            let a = state.address(&addr);
            check_access(region, a, pc)?;
            let v = state.reg(rt);
            state.write(a, ACCESS_BYTES, v);
            event = Some(MemEvent { op: MemOp::Wt, addr: a, width: ACCESS_BYTES, pc });
        }
        Instruction::Mov { rd, src } => {
            let v = state.operand(src);
            state.set_reg(rd, v);
        }
        Instruction::Add { rd, rn, rm } => {
            let v = state.reg(rn).wrapping_add(state.operand(rm));
            state.set_reg(rd, v);
        }
        Instruction::Sub { rd, rn, rm } => {
            let v = state.reg(rn).wrapping_sub(state.operand(rm));
            state.set_reg(rd, v);
        }
        Instruction::Mul { rd, rn, rm } => {
            let v = state.reg(rn).wrapping_mul(state.reg(rm));
            state.set_reg(rd, v);
        }
        Instruction::Cmp { rn, rm } => {
            let a = state.reg(rn);
            let b = state.operand(rm);
            state.z = a == b;
            state.n = (a.wrapping_sub(b) >> 63) == 1;
        }
        Instruction::B { offset } => next = pc + offset as usize,
        Instruction::BEq { offset } => {
            if state.z {
                next = pc + offset as usize;
            }
        }
        Instruction::Cbz { rt, offset } => {
            if state.reg(rt) == 0 {
                next = pc + offset as usize;
            }
        }
        Instruction::Cbnz { rt, offset } => {
            if state.reg(rt) != 0 {
                next = pc + offset as usize;
            }
        }
        Instruction::Nop => {}
    }
    state.pc = next;
    Ok(event)
}

/// A complete run: final state, memory accesses, and the executed pcs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub state: ConcreteState,
    pub events: Vec<MemEvent>,
    pub executed: Vec<usize>,
}

pub fn run_concrete_trace(
    program: &Program,
    init: &ConcreteState,
    region: &MemRegion,
) -> Result<Trace, ExecError> {
    let mut state = init.clone();
    let mut events = Vec::new();
    let mut executed = Vec::new();
    // forward-only branches bound the run by the program length
    while state.pc < program.len() {
        executed.push(state.pc);
        if let Some(ev) = concrete_step(&mut state, program, region)? {
            events.push(ev);
        }
    }
    Ok(Trace { state, events, executed })
}

/// Runs to completion and returns the final state and the ordered memory events.
pub fn run_concrete(
    program: &Program,
    init: &ConcreteState,
    region: &MemRegion,
) -> Result<(ConcreteState, Vec<MemEvent>), ExecError> {
    run_concrete_trace(program, init, region).map(|t| (t.state, t.events))
}
