//! Symbolic execution of annotated IR programs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::concrete::{ConcreteState, MemOp};
use crate::ir::{eval, Env, EvalError, Expr, IrProgram, IrStmt, Label, Terminator, Value, Var};
use crate::obs::{accesses_of, Observation};

pub const DEFAULT_PATH_CAP: usize = 64;

/// A symbolic observation: when `cond` holds the tuple `exprs` is observed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymObs {
    pub cond: Expr,
    pub exprs: Vec<Expr>,
}

impl SymObs {
    pub fn prime(&self) -> SymObs {
        SymObs { cond: self.cond.prime(), exprs: self.exprs.iter().map(Expr::prime).collect() }
    }
}

/// A memory access made along a path, over the initial symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymAccess {
    pub op: MemOp,
    pub addr: Expr,
    pub width: u8,
}

/// State of one path. Every expression is over the initial symbols: a
/// variable absent from `store` still holds its initial value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymState {
    pub pc: Label,
    pub path: Expr,
    pub store: BTreeMap<Var, Expr>,
    pub obs: Vec<SymObs>,
    pub accesses: Vec<SymAccess>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("more than {0} paths")]
    PathExplosion(usize),
    #[error("the input does not follow this path")]
    PathMismatch,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl SymState {
    pub fn initial(entry: Label) -> Self {
        SymState { pc: entry, path: Expr::tt(), store: BTreeMap::new(), obs: Vec::new(), accesses: Vec::new() }
    }

    pub fn value(&self, v: Var) -> Expr {
        self.store.get(&v).cloned().unwrap_or_else(|| Expr::var(v))
    }

    /// `e` evaluated in this state: variables replaced by their symbolic values.
    pub fn eval(&self, e: &Expr) -> Expr {
        e.substitute(|v| self.store.get(&v).cloned())
    }

    /// Address expressions of the accesses, in program order.
    pub fn addrs(&self) -> Vec<Expr> {
        self.accesses.iter().map(|a| a.addr.clone()).collect()
    }

    fn exec(&mut self, s: &IrStmt) {
        match s {
            IrStmt::Assign(var, e) => {
                for acc in accesses_of(e) {
                    self.accesses.push(SymAccess { op: acc.op, addr: self.eval(&acc.addr), width: acc.width });
                }
                let v = self.eval(e);
                self.store.insert(*var, v);
            }
            IrStmt::Obs { cond, exprs } => {
                let cond = self.eval(cond);
                let exprs = exprs.iter().map(|e| self.eval(e)).collect();
                self.obs.push(SymObs { cond, exprs });
            }
        }
    }
}

/// Explores every path depth first, taking the `then` branch first. Forks
/// whose condition folds to a constant follow the one feasible side.
pub fn sym_exec(ir: &IrProgram, cap: usize) -> Result<Vec<SymState>, SymError> {
    let index = ir.index();
    let entry = match ir.entry() {
        Some(l) => l,
        None => return Ok(Vec::new()),
    };
    let mut done = Vec::new();
    let mut stack = alloc::vec![SymState::initial(entry)];
    while let Some(mut st) = stack.pop() {
        let block = &ir.blocks[index[&st.pc]];
        for s in &block.stmts {
            st.exec(s);
        }
        match &block.term {
            Terminator::Halt => {
                if done.len() == cap {
                    return Err(SymError::PathExplosion(cap));
                }
                done.push(st);
            }
            Terminator::Jmp(l) => {
                st.pc = *l;
                stack.push(st);
            }
            Terminator::CJmp(c, t, e) => {
                let c = st.eval(c);
                match c.as_bool() {
                    Some(b) => {
                        st.pc = if b { *t } else { *e };
                        stack.push(st);
                    }
                    None => {
                        let mut other = st.clone();
                        other.pc = *e;
                        other.path = Expr::land(other.path, Expr::not(c.clone()));
                        st.pc = *t;
                        st.path = Expr::land(st.path, c);
                        // pushed last so it is explored first
                        stack.push(other);
                        stack.push(st);
                    }
                }
            }
        }
    }
    Ok(done)
}

/// The concrete observations `σ` produces from `s`.
pub fn concretize_obs(sigma: &SymState, s: &ConcreteState) -> Result<Vec<Observation>, SymError> {
    concretize_obs_env(sigma, &Env::from_state(s))
}

pub fn concretize_obs_env(sigma: &SymState, env: &Env) -> Result<Vec<Observation>, SymError> {
    if eval(&sigma.path, env)? != Value::Bool(true) {
        return Err(SymError::PathMismatch);
    }
    let mut out = Vec::new();
    for o in &sigma.obs {
        if eval(&o.cond, env)? == Value::Bool(true) {
            let mut vals = Vec::with_capacity(o.exprs.len());
            for e in &o.exprs {
                vals.push(eval(e, env)?.as_u64().ok_or_else(|| EvalError::Type(alloc::format!("{e}")))?);
            }
            out.push(Observation(vals));
        }
    }
    Ok(out)
}

/// Index of the unique path whose condition `env` satisfies.
pub fn path_of(paths: &[SymState], env: &Env) -> Result<Option<usize>, EvalError> {
    for (i, p) in paths.iter().enumerate() {
        if eval(&p.path, env)? == Value::Bool(true) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

impl fmt::Display for SymObs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, [", self.cond)?;
        for (i, e) in self.exprs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("])")
    }
}

impl fmt::Display for SymState {
    /// Structured dump: path condition, store, observation list.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "path: {}", self.path)?;
        for (v, e) in &self.store {
            writeln!(f, "  {v} := {e}")?;
        }
        for o in &self.obs {
            writeln!(f, "  obs {o}")?;
        }
        Ok(())
    }
}
