//! Turning solver models into pairs of concrete initial states.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concrete::{ConcreteState, MemOp, MemRegion};
use crate::ir::{eval_bool, run_ir, Env, EvalError, Expr, IrProgram, Value, Var};
use crate::solve::Model;

/// Where a test case came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub program_id: u64,
    pub pair: (usize, usize),
    pub guard: Option<String>,
    pub terms: Option<(u64, u64)>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub s1: ConcreteState,
    pub s2: ConcreteState,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TestCaseError {
    #[error("model does not satisfy the query once materialized")]
    IncompleteModel,
    #[error("replaying the model: {0}")]
    Eval(#[from] EvalError),
}

/// Builds both initial states from `model`. Registers and flags missing
/// from the model are zero. Memory is materialized by running `ir` on each
/// copy and keeping the initial bytes at every address it reads, so the
/// concrete runs take the same accesses as the model does.
///
/// The result is checked against `query`: substituted back, it must
/// evaluate to true.
pub fn model_to_testcase(
    model: &Model,
    ir: &IrProgram,
    query: &Expr,
    region: &MemRegion,
    provenance: Provenance,
) -> Result<TestCase, TestCaseError> {
    let env = model.to_env();
    let s1 = materialize(&env, ir, false, region)?;
    let s2 = materialize(&env, ir, true, region)?;
    let check = Env::from_pair(&s1, &s2);
    if !eval_bool(query, &check)? {
        return Err(TestCaseError::IncompleteModel);
    }
    Ok(TestCase { s1, s2, provenance })
}

fn materialize(env: &Env, ir: &IrProgram, primed: bool, region: &MemRegion) -> Result<ConcreteState, EvalError> {
    let mut one = Env::new();
    let mut regs = env.to_state(primed);
    regs.mem.clear();
    one.insert_state(&regs, false);
    let mem_var = if primed { Var::M.primed() } else { Var::M };
    let mem = match env.get(mem_var) {
        Some(Value::Mem(m)) => m.clone(),
        _ => Default::default(),
    };
    one.set(Var::M, Value::Mem(mem.clone()));
    let run = run_ir(ir, &one, region)?;
    let mut s = regs;
    let mut written: Vec<(u64, u8)> = Vec::new();
    for ev in &run.events {
        for k in 0..ev.width as u64 {
            let a = ev.addr.wrapping_add(k);
            let earlier_store = written.iter().any(|&(w, n)| a >= w && a < w + n as u64);
            if ev.op == MemOp::Rd && !earlier_store {
                let b = mem.byte(a);
                if b != 0 {
                    s.mem.insert(a, b);
                }
            }
        }
        if ev.op == MemOp::Wt {
            written.push((ev.addr, ev.width));
        }
    }
    Ok(s)
}
