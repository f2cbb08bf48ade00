use alloc::vec::Vec;

use super::eval::{eval_with, Env, EvalError, Value};
use super::program::{IrProgram, IrStmt, Label, Terminator};
use crate::concrete::{ExecError, MemEvent, MemOp, MemRegion};
use crate::obs::Observation;

/// Result of a reference IR run on one state copy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrRun {
    pub env: Env,
    /// Non-silent observations in emission order.
    pub observations: Vec<Observation>,
    /// Memory accesses; `pc` is the label of the issuing block.
    pub events: Vec<MemEvent>,
    pub visited: Vec<Label>,
}

/// Interprets `ir` from `env`. Every access is checked against `region`;
/// a violation aborts the run like the concrete semantics do.
pub fn run_ir(ir: &IrProgram, env: &Env, region: &MemRegion) -> Result<IrRun, EvalError> {
    let index = ir.index();
    let mut env = env.clone();
    let mut observations = Vec::new();
    let mut events = Vec::new();
    let mut visited = Vec::new();
    let mut at = match ir.entry() {
        Some(l) => l,
        None => return Ok(IrRun { env, observations, events, visited }),
    };
    // acyclic control flow: each block runs at most once
    for _ in 0..=ir.blocks.len() {
        let block = &ir.blocks[index[&at]];
        visited.push(at);
        let pc = at;
        let mut hook = |op: MemOp, addr: u64, width: u8| -> Result<(), ExecError> {
            if !region.contains(addr, width) {
                return Err(ExecError::UnmappedAccess { addr, pc });
            }
            if !addr.is_multiple_of(width as u64) {
                return Err(ExecError::Misaligned { addr, width, pc });
            }
            events.push(MemEvent { op, addr, width, pc });
            Ok(())
        };
        for s in &block.stmts {
            match s {
                IrStmt::Assign(v, e) => {
                    let val = eval_with(e, &env, Some(&mut hook))?;
                    env.set(*v, val);
                }
                IrStmt::Obs { cond, exprs } => {
                    let c = eval_with(cond, &env, None)?;
                    if c == Value::Bool(true) {
                        let mut out = Vec::with_capacity(exprs.len());
                        for e in exprs {
                            let v = eval_with(e, &env, None)?;
                            out.push(v.as_u64().ok_or_else(|| EvalError::Type(alloc::format!("{e}")))?);
                        }
                        observations.push(Observation(out));
                    }
                }
            }
        }
        at = match &block.term {
            Terminator::Halt => return Ok(IrRun { env, observations, events, visited }),
            Terminator::Jmp(l) => *l,
            Terminator::CJmp(c, t, e) => match eval_with(c, &env, None)? {
                Value::Bool(true) => *t,
                Value::Bool(false) => *e,
                _ => return Err(EvalError::Type(alloc::format!("{c}"))),
            },
        };
    }
    unreachable!("validated IR programs are acyclic")
}
