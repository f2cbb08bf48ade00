//! Helpers shared by the integration suites: small programs, input
//! domains and the concrete observation oracle.
#![allow(dead_code)]

use obsval_core::concrete::{run_concrete_trace, ConcreteState, MemRegion};
use obsval_core::geometry::CacheGeometry;
use obsval_core::gen::rng_from_seed;
use obsval_core::isa::{Instruction, MemOperand, Operand, Program, Reg};
use obsval_core::obs::{ObsModel, Observation};
use rand::Rng;

/// Observations of a concrete run, or `None` when the run faults.
pub fn oracle_obs(p: &Program, s: &ConcreteState, model: &ObsModel, region: &MemRegion) -> Option<Vec<Observation>> {
    let t = run_concrete_trace(p, s, region).ok()?;
    let mut evs = t.events.iter().peekable();
    let mut out = Vec::new();
    for &pc in &t.executed {
        let ev = evs.next_if(|e| e.pc == pc);
        if let Some(o) = model.observe(pc, &p.0[pc], ev) {
            out.push(o);
        }
    }
    Some(out)
}

/// Reduced setting: 8-byte lines, 4 sets, 2 ways, a 64-byte region.
pub fn reduced() -> (CacheGeometry, MemRegion) {
    (CacheGeometry::reduced(), MemRegion::new(0x100, 0x40))
}

/// Programs of at most `max_len` instructions over `x0..x2`, with memory
/// offsets of 0 or 8 and forward branches.
pub fn small_program(seed: u64, max_len: usize) -> Program {
    let mut r = rng_from_seed(seed);
    let len = r.random_range(1..=max_len);
    let reg = |r: &mut obsval_core::gen::GenRng| Reg::x(r.random_range(0..3));
    let mut out = Vec::new();
    for i in 0..len {
        let room = (len - i) as u32;
        let mem = |r: &mut obsval_core::gen::GenRng| {
            let base = reg(r);
            if r.random_bool(0.5) { MemOperand::bare(base) } else { MemOperand::new(base, 8) }
        };
        let insn = match r.random_range(0..9) {
            0..=2 => Instruction::Ldr { rt: if r.random_bool(0.15) { Reg::Xzr } else { reg(&mut r) }, addr: mem(&mut r) },
            3 => Instruction::Str { rt: reg(&mut r), addr: mem(&mut r) },
            4 => Instruction::Add { rd: reg(&mut r), rn: reg(&mut r), rm: Operand::Imm(8 * r.random_range(0..3)) },
            5 => Instruction::Cmp { rn: reg(&mut r), rm: Operand::Reg(reg(&mut r)) },
            6 => Instruction::BEq { offset: r.random_range(1..=room) },
            7 => Instruction::Cbz { rt: reg(&mut r), offset: r.random_range(1..=room) },
            _ => Instruction::Mov { rd: reg(&mut r), src: Operand::Reg(reg(&mut r)) },
        };
        out.push(insn);
    }
    Program(out)
}

/// Memory image where the word at every aligned region address holds
/// another region address, so dependent loads stay inside.
pub fn pointer_image(region: &MemRegion) -> std::collections::BTreeMap<u64, u8> {
    let mut s = ConcreteState::new();
    let mut a = region.base;
    while a + 8 <= region.end() {
        let target = region.base + ((a - region.base + 0x18) % region.size);
        s.write(a, 8, target);
        a += 8;
    }
    s.mem
}

/// A random in-region input for programs over all registers.
pub fn random_state(r: &mut obsval_core::gen::GenRng, region: &MemRegion, words: u64) -> ConcreteState {
    let mut s = ConcreteState::new();
    for n in 0..Reg::COUNT {
        s.regs[n as usize] = region.base + 8 * r.random_range(0..words);
    }
    s.z = r.random_bool(0.5);
    s.n = r.random_bool(0.5);
    for _ in 0..16 {
        let a = region.base + 8 * r.random_range(0..words);
        let v = region.base + 8 * r.random_range(0..words);
        s.write(a, 8, v);
    }
    s
}

/// Runs `p` on `s` concretely and through its symbolic paths and checks
/// that both agree on observations, registers, flags and memory. `None`
/// when the concrete run faults.
pub fn differential(p: &Program, s: &ConcreteState, model: &ObsModel, region: &MemRegion) -> Option<Result<(), String>> {
    use obsval_core::ir::{eval, Env, Value, Var};
    use obsval_core::symexec::{concretize_obs, path_of, sym_exec, DEFAULT_PATH_CAP};
    use obsval_core::transpile::transpile;

    let trace = run_concrete_trace(p, s, region).ok()?;
    let expected = oracle_obs(p, s, model, region)?;
    let check = || -> Result<(), String> {
        let ir = model.annotate(&transpile(p).map_err(|e| e.to_string())?);
        let paths = sym_exec(&ir, DEFAULT_PATH_CAP).map_err(|e| e.to_string())?;
        let env = Env::from_state(s);
        let satisfied: Vec<usize> =
            (0..paths.len()).filter(|&i| eval(&paths[i].path, &env) == Ok(Value::Bool(true))).collect();
        if satisfied.len() != 1 {
            return Err(format!("{} paths satisfied", satisfied.len()));
        }
        let sigma = &paths[path_of(&paths, &env).map_err(|e| e.to_string())?.unwrap()];
        let got = concretize_obs(sigma, s).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("observations {got:?} != {expected:?}"));
        }
        let value = |v: Var| eval(&sigma.value(v), &env).map_err(|e| e.to_string());
        for n in 0..Reg::COUNT {
            if value(Var::x(n))?.as_u64() != Some(trace.state.regs[n as usize]) {
                return Err(format!("x{n} differs"));
            }
        }
        if value(Var::Z)?.as_bool() != Some(trace.state.z) || value(Var::N)?.as_bool() != Some(trace.state.n) {
            return Err("flags differ".into());
        }
        let mem = value(Var::M)?;
        let mem = mem.as_mem().ok_or("memory is not an array")?;
        let addrs: std::collections::BTreeSet<u64> = mem.bytes.keys().chain(trace.state.mem.keys()).copied().collect();
        for a in addrs {
            if mem.byte(a) != trace.state.read_byte(a) {
                return Err(format!("memory byte {a:#x} differs"));
            }
        }
        Ok(())
    };
    Some(check())
}
