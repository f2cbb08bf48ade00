//! Reduced AArch64-flavoured instruction set and its textual assembly form.
//!
//! Programs are straight sequences of [`Instruction`]s. Every branch is
//! encoded as a forward offset counted in instructions; the assembly text
//! uses byte offsets (`b.eq #0x14` skips five instructions) like the
//! disassembly the programs are modelled after.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest magnitude accepted for a memory operand offset.
pub const MAX_MEM_OFFSET: i64 = 4096;

/// Bytes per encoded instruction, used to render branch offsets.
pub const INSN_BYTES: u32 = 4;

/// A 64-bit general purpose register or the constant-zero register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Reg {
    X(u8),
    Xzr,
}

impl Reg {
    pub const COUNT: u8 = 31;

    pub fn x(n: u8) -> Reg {
        assert!(n < Self::COUNT, "register x{n} out of range");
        Reg::X(n)
    }

    /// All architectural registers `x0..=x30` (without `xzr`).
    pub fn all() -> impl Iterator<Item = Reg> {
        (0..Self::COUNT).map(Reg::X)
    }

    pub fn index(self) -> Option<usize> {
        match self {
            Reg::X(n) => Some(n as usize),
            Reg::Xzr => None,
        }
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reg::X(n) => write!(f, "x{n}"),
            Reg::Xzr => f.write_str("xzr"),
        }
    }
}

impl From<Reg> for String {
    fn from(r: Reg) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Reg {
    type Error = AsmError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Reg {
    type Err = AsmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if t == "xzr" {
            return Ok(Reg::Xzr);
        }
        let num = t
            .strip_prefix('x')
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| *n < Reg::COUNT && !(t.len() > 2 && t.as_bytes()[1] == b'0'));
        num.map(Reg::X).ok_or_else(|| AsmError::UnknownRegister(s.trim().to_string()))
    }
}

/// Second operand of arithmetic, move and compare instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write_imm(f, *v),
        }
    }
}

fn write_imm(f: &mut fmt::Formatter<'_>, v: u64) -> fmt::Result {
    if v < 0x1000 {
        write!(f, "#{v}")
    } else {
        write!(f, "#0x{v:x}")
    }
}

/// `[base]` or `[base, #offset]`.
///
/// `offset` is `None` for the bare form; both forms address `base + offset`
/// but are kept apart so that assembly text round-trips exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemOperand {
    pub base: Reg,
    pub offset: Option<i64>,
}

impl MemOperand {
    pub fn new(base: Reg, offset: i64) -> Self {
        MemOperand { base, offset: Some(offset) }
    }

    pub fn bare(base: Reg) -> Self {
        MemOperand { base, offset: None }
    }

    pub fn displacement(&self) -> i64 {
        self.offset.unwrap_or(0)
    }
}

impl fmt::Display for MemOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.offset {
            None => write!(f, "[{}]", self.base),
            Some(o) if o < 0 => write!(f, "[{}, #-{}]", self.base, o.unsigned_abs()),
            Some(o) => write!(f, "[{}, #{}]", self.base, o),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mnemonic {
    Ldr,
    Str,
    Mov,
    Add,
    Sub,
    Mul,
    Cmp,
    B,
    BEq,
    Cbz,
    Cbnz,
    Nop,
}

impl Mnemonic {
    pub fn as_str(self) -> &'static str {
        match self {
            Mnemonic::Ldr => "ldr",
            Mnemonic::Str => "str",
            Mnemonic::Mov => "mov",
            Mnemonic::Add => "add",
            Mnemonic::Sub => "sub",
            Mnemonic::Mul => "mul",
            Mnemonic::Cmp => "cmp",
            Mnemonic::B => "b",
            Mnemonic::BEq => "b.eq",
            Mnemonic::Cbz => "cbz",
            Mnemonic::Cbnz => "cbnz",
            Mnemonic::Nop => "nop",
        }
    }
}

/// One instruction. Branch offsets count instructions and are always ≥ 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Ldr { rt: Reg, addr: MemOperand },
    Str { rt: Reg, addr: MemOperand },
    Mov { rd: Reg, src: Operand },
    Add { rd: Reg, rn: Reg, rm: Operand },
    Sub { rd: Reg, rn: Reg, rm: Operand },
    Mul { rd: Reg, rn: Reg, rm: Reg },
    Cmp { rn: Reg, rm: Operand },
    B { offset: u32 },
    BEq { offset: u32 },
    Cbz { rt: Reg, offset: u32 },
    Cbnz { rt: Reg, offset: u32 },
    Nop,
}

impl Instruction {
    pub fn mnemonic(&self) -> Mnemonic {
        match self {
            Instruction::Ldr { .. } => Mnemonic::Ldr,
            Instruction::Str { .. } => Mnemonic::Str,
            Instruction::Mov { .. } => Mnemonic::Mov,
            Instruction::Add { .. } => Mnemonic::Add,
            Instruction::Sub { .. } => Mnemonic::Sub,
            Instruction::Mul { .. } => Mnemonic::Mul,
            Instruction::Cmp { .. } => Mnemonic::Cmp,
            Instruction::B { .. } => Mnemonic::B,
            Instruction::BEq { .. } => Mnemonic::BEq,
            Instruction::Cbz { .. } => Mnemonic::Cbz,
            Instruction::Cbnz { .. } => Mnemonic::Cbnz,
            Instruction::Nop => Mnemonic::Nop,
        }
    }

    pub fn branch_offset(&self) -> Option<u32> {
        match *self {
            Instruction::B { offset }
            | Instruction::BEq { offset }
            | Instruction::Cbz { offset, .. }
            | Instruction::Cbnz { offset, .. } => Some(offset),
            _ => None,
        }
    }

    pub fn mem_operand(&self) -> Option<&MemOperand> {
        match self {
            Instruction::Ldr { addr, .. } | Instruction::Str { addr, .. } => Some(addr),
            _ => None,
        }
    }

    /// Registers read by the instruction (the zero register is omitted).
    pub fn reads(&self) -> Vec<Reg> {
        let mut out = Vec::new();
        let mut push = |r: Reg| {
            if r != Reg::Xzr && !out.contains(&r) {
                out.push(r);
            }
        };
        match *self {
            Instruction::Ldr { addr, .. } => push(addr.base),
            Instruction::Str { rt, addr } => {
                push(rt);
                push(addr.base);
            }
            Instruction::Mov { src, .. } => {
                if let Operand::Reg(r) = src {
                    push(r)
                }
            }
            Instruction::Add { rn, rm, .. } | Instruction::Sub { rn, rm, .. } => {
                push(rn);
                if let Operand::Reg(r) = rm {
                    push(r)
                }
            }
            Instruction::Mul { rn, rm, .. } => {
                push(rn);
                push(rm);
            }
            Instruction::Cmp { rn, rm } => {
                push(rn);
                if let Operand::Reg(r) = rm {
                    push(r)
                }
            }
            Instruction::Cbz { rt, .. } | Instruction::Cbnz { rt, .. } => push(rt),
            Instruction::B { .. } | Instruction::BEq { .. } | Instruction::Nop => {}
        }
        out
    }

    /// Register written by the instruction, if any (writes to `xzr` included).
    pub fn writes(&self) -> Option<Reg> {
        match *self {
            Instruction::Ldr { rt, .. } => Some(rt),
            Instruction::Mov { rd, .. }
            | Instruction::Add { rd, .. }
            | Instruction::Sub { rd, .. }
            | Instruction::Mul { rd, .. } => Some(rd),
            _ => None,
        }
    }
}

fn write_branch(f: &mut fmt::Formatter<'_>, offset: u32) -> fmt::Result {
    write!(f, "#0x{:x}", offset * INSN_BYTES)
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.mnemonic().as_str();
        match *self {
            Instruction::Ldr { rt, addr } | Instruction::Str { rt, addr } => {
                write!(f, "{m} {rt}, {addr}")
            }
            Instruction::Mov { rd, src } => write!(f, "{m} {rd}, {src}"),
            Instruction::Add { rd, rn, rm } | Instruction::Sub { rd, rn, rm } => {
                write!(f, "{m} {rd}, {rn}, {rm}")
            }
            Instruction::Mul { rd, rn, rm } => write!(f, "{m} {rd}, {rn}, {rm}"),
            Instruction::Cmp { rn, rm } => write!(f, "{m} {rn}, {rm}"),
            Instruction::B { offset } | Instruction::BEq { offset } => {
                write!(f, "{m} ")?;
                write_branch(f, offset)
            }
            Instruction::Cbz { rt, offset } | Instruction::Cbnz { rt, offset } => {
                write!(f, "{m} {rt}, ")?;
                write_branch(f, offset)
            }
            Instruction::Nop => f.write_str(m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MalformedProgram {
    #[error("instruction {at}: branch offset must be forward (got {offset})")]
    BackwardBranch { at: usize, offset: u32 },
    #[error("instruction {at}: branch target {target} lies outside the program of length {len}")]
    TargetOutOfRange { at: usize, target: usize, len: usize },
    #[error("instruction {at}: memory offset {offset} exceeds ±{MAX_MEM_OFFSET}")]
    OffsetTooLarge { at: usize, offset: i64 },
    #[error("instruction {at}: xzr cannot be used as a memory base")]
    ZeroBase { at: usize },
    #[error("instruction {at}: register x{index} does not exist")]
    UnknownRegister { at: usize, index: u8 },
}

/// A program: an instruction sequence whose branches all jump forward.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Program(pub Vec<Instruction>);

impl Program {
    pub fn new(insns: Vec<Instruction>) -> Self {
        Program(insns)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.0
    }

    /// Checks the structural invariants: forward in-range branches (a branch
    /// may target the end of the program), bounded memory offsets, and no
    /// zero-register memory base.
    pub fn validate(&self) -> Result<(), MalformedProgram> {
        let len = self.0.len();
        for (at, insn) in self.0.iter().enumerate() {
            if let Some(offset) = insn.branch_offset() {
                if offset == 0 {
                    return Err(MalformedProgram::BackwardBranch { at, offset });
                }
                let target = at + offset as usize;
                if target > len {
                    return Err(MalformedProgram::TargetOutOfRange { at, target, len });
                }
            }
            if let Some(mem) = insn.mem_operand() {
                if mem.base == Reg::Xzr {
                    return Err(MalformedProgram::ZeroBase { at });
                }
                let off = mem.displacement();
                if off.unsigned_abs() > MAX_MEM_OFFSET as u64 {
                    return Err(MalformedProgram::OffsetTooLarge { at, offset: off });
                }
            }
            let regs = insn.reads().into_iter().chain(insn.writes());
            for r in regs {
                if let Reg::X(index) = r {
                    if index >= Reg::COUNT {
                        return Err(MalformedProgram::UnknownRegister { at, index });
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses assembly text: one instruction per line (or `;`-separated),
    /// `//` starts a comment.
    pub fn parse(text: &str) -> Result<Program, AsmError> {
        let mut out = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split("//").next().unwrap_or("");
            for stmt in line.split(';') {
                let stmt = stmt.trim();
                if stmt.is_empty() {
                    continue;
                }
                out.push(parse_instruction(stmt, lineno + 1)?);
            }
        }
        Ok(Program(out))
    }

    /// Registers read before any write along some path; a conservative
    /// over-approximation of the program inputs.
    pub fn referenced_regs(&self) -> Vec<Reg> {
        let mut regs: Vec<Reg> = Vec::new();
        for insn in &self.0 {
            for r in insn.reads().into_iter().chain(insn.writes()) {
                if r != Reg::Xzr && !regs.contains(&r) {
                    regs.push(r);
                }
            }
        }
        regs.sort();
        regs
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for insn in &self.0 {
            writeln!(f, "{insn}")?;
        }
        Ok(())
    }
}

impl FromStr for Program {
    type Err = AsmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Program::parse(s)
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Syntax { line, msg: msg.into() }
}

fn parse_u64(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn parse_imm(s: &str, line: usize) -> Result<u64, AsmError> {
    let body = s.trim().strip_prefix('#').unwrap_or(s.trim());
    parse_u64(body).ok_or_else(|| syntax(line, alloc::format!("bad immediate `{s}`")))
}

fn parse_signed_imm(s: &str, line: usize) -> Result<i64, AsmError> {
    let body = s.trim().strip_prefix('#').unwrap_or(s.trim()).trim();
    let (neg, mag) = match body.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, body),
    };
    let v = parse_u64(mag)
        .filter(|v| *v <= i64::MAX as u64)
        .ok_or_else(|| syntax(line, alloc::format!("bad offset `{s}`")))? as i64;
    Ok(if neg { -v } else { v })
}

fn parse_operand(s: &str, line: usize) -> Result<Operand, AsmError> {
    let t = s.trim();
    if t.starts_with('#') || t.as_bytes().first().is_some_and(|b| b.is_ascii_digit()) {
        parse_imm(t, line).map(Operand::Imm)
    } else {
        t.parse::<Reg>().map(Operand::Reg)
    }
}

fn parse_branch(s: &str, line: usize) -> Result<u32, AsmError> {
    let bytes = parse_imm(s, line)?;
    if bytes % INSN_BYTES as u64 != 0 {
        return Err(syntax(line, alloc::format!("branch offset {bytes} is not a multiple of 4")));
    }
    u32::try_from(bytes / INSN_BYTES as u64)
        .map_err(|_| syntax(line, alloc::format!("branch offset {bytes} too large")))
}

fn parse_mem(s: &str, line: usize) -> Result<MemOperand, AsmError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| syntax(line, alloc::format!("expected memory operand, got `{s}`")))?;
    let mut parts = inner.split(',');
    let base: Reg = parts.next().unwrap_or("").parse()?;
    let offset = match parts.next() {
        Some(o) => Some(parse_signed_imm(o, line)?),
        None => None,
    };
    if parts.next().is_some() {
        return Err(syntax(line, "too many memory operand components"));
    }
    Ok(MemOperand { base, offset })
}

/// Splits operands at top-level commas (commas inside `[...]` stay put).
fn split_operands(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        out.push(last);
    }
    out
}

fn parse_instruction(stmt: &str, line: usize) -> Result<Instruction, AsmError> {
    let (mnemonic, rest) = match stmt.find(char::is_whitespace) {
        Some(i) => (&stmt[..i], stmt[i..].trim()),
        None => (stmt, ""),
    };
    let m = mnemonic.to_ascii_lowercase();
    let ops = split_operands(rest);
    let want = |n: usize| -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(syntax(line, alloc::format!("`{m}` expects {n} operands, got {}", ops.len())))
        }
    };
    let insn = match m.as_str() {
        "ldr" | "str" => {
            want(2)?;
            let rt = ops[0].parse()?;
            let addr = parse_mem(ops[1], line)?;
            if m == "ldr" {
                Instruction::Ldr { rt, addr }
            } else {
                Instruction::Str { rt, addr }
            }
        }
        "mov" => {
            want(2)?;
            Instruction::Mov { rd: ops[0].parse()?, src: parse_operand(ops[1], line)? }
        }
        "add" | "sub" => {
            want(3)?;
            let rd = ops[0].parse()?;
            let rn = ops[1].parse()?;
            let rm = parse_operand(ops[2], line)?;
            if m == "add" {
                Instruction::Add { rd, rn, rm }
            } else {
                Instruction::Sub { rd, rn, rm }
            }
        }
        "mul" => {
            want(3)?;
            Instruction::Mul { rd: ops[0].parse()?, rn: ops[1].parse()?, rm: ops[2].parse()? }
        }
        "cmp" => {
            want(2)?;
            Instruction::Cmp { rn: ops[0].parse()?, rm: parse_operand(ops[1], line)? }
        }
        "b" => {
            want(1)?;
            Instruction::B { offset: parse_branch(ops[0], line)? }
        }
        "b.eq" | "beq" => {
            want(1)?;
            Instruction::BEq { offset: parse_branch(ops[0], line)? }
        }
        "cbz" | "cbnz" => {
            want(2)?;
            let rt = ops[0].parse()?;
            let offset = parse_branch(ops[1], line)?;
            if m == "cbz" {
                Instruction::Cbz { rt, offset }
            } else {
                Instruction::Cbnz { rt, offset }
            }
        }
        "nop" => {
            want(0)?;
            Instruction::Nop
        }
        _ => return Err(AsmError::UnknownMnemonic { line, mnemonic: mnemonic.to_string() }),
    };
    Ok(insn)
}
