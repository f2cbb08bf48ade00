use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use super::expr::{Expr, Ty, TypeError, Var};

pub type Label = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IrStmt {
    Assign(Var, Expr),
    /// Emits `exprs` as one observation when `cond` holds, else nothing.
    Obs { cond: Expr, exprs: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminator {
    Jmp(Label),
    CJmp(Expr, Label, Label),
    Halt,
}

impl Terminator {
    pub fn targets(&self) -> Vec<Label> {
        match self {
            Terminator::Jmp(l) => alloc::vec![*l],
            Terminator::CJmp(_, t, e) => alloc::vec![*t, *e],
            Terminator::Halt => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrBlock {
    pub label: Label,
    /// Index of the instruction the block was transpiled from; `None`
    /// for the synthetic exit block.
    pub source: Option<usize>,
    pub stmts: Vec<IrStmt>,
    pub term: Terminator,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IrProgram {
    pub blocks: Vec<IrBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("empty program")]
    Empty,
    #[error("duplicate label l{0}")]
    DuplicateLabel(Label),
    #[error("jump to missing label l{0}")]
    MissingLabel(Label),
    #[error("control flow cycle through l{0}")]
    Cycle(Label),
    #[error("block l{label}: {err}")]
    Type { label: Label, err: TypeError },
    #[error("block l{label}: assignment of {found} to {var}")]
    AssignType { label: Label, var: Var, found: Ty },
    #[error("block l{label}: condition is not boolean")]
    NonBoolCond { label: Label },
}

impl IrProgram {
    /// The entry block is the first one.
    pub fn entry(&self) -> Option<Label> {
        self.blocks.first().map(|b| b.label)
    }

    pub fn block(&self, label: Label) -> Option<&IrBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn index(&self) -> BTreeMap<Label, usize> {
        self.blocks.iter().enumerate().map(|(i, b)| (b.label, i)).collect()
    }

    /// Labels exist and are unique, control flow is acyclic, and every
    /// statement is well typed.
    pub fn validate(&self) -> Result<(), IrError> {
        if self.blocks.is_empty() {
            return Err(IrError::Empty);
        }
        let mut labels = BTreeSet::new();
        for b in &self.blocks {
            if !labels.insert(b.label) {
                return Err(IrError::DuplicateLabel(b.label));
            }
        }
        for b in &self.blocks {
            for t in b.term.targets() {
                if !labels.contains(&t) {
                    return Err(IrError::MissingLabel(t));
                }
            }
            self.check_types(b)?;
        }
        self.check_acyclic()
    }

    fn check_types(&self, b: &IrBlock) -> Result<(), IrError> {
        let label = b.label;
        let ty = |e: &Expr| e.ty().map_err(|err| IrError::Type { label, err });
        for s in &b.stmts {
            match s {
                IrStmt::Assign(var, e) => {
                    let t = ty(e)?;
                    if t != var.ty() {
                        return Err(IrError::AssignType { label, var: *var, found: t });
                    }
                }
                IrStmt::Obs { cond, exprs } => {
                    if ty(cond)? != Ty::Bool {
                        return Err(IrError::NonBoolCond { label });
                    }
                    for e in exprs {
                        ty(e)?;
                    }
                }
            }
        }
        if let Terminator::CJmp(c, _, _) = &b.term {
            if ty(c)? != Ty::Bool {
                return Err(IrError::NonBoolCond { label });
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), IrError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let index = self.index();
        let mut mark = alloc::vec![0u8; self.blocks.len()];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for root in 0..self.blocks.len() {
            if mark[root] != 0 {
                continue;
            }
            stack.push((root, 0));
            mark[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let targets = self.blocks[node].term.targets();
                if *next < targets.len() {
                    let t = index[&targets[*next]];
                    *next += 1;
                    match mark[t] {
                        0 => {
                            mark[t] = 1;
                            stack.push((t, 0));
                        }
                        1 => return Err(IrError::Cycle(self.blocks[t].label)),
                        _ => {}
                    }
                } else {
                    mark[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    pub fn stmt_count(&self) -> usize {
        self.blocks.iter().map(|b| b.stmts.len()).sum()
    }

    pub fn obs_count(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.stmts)
            .filter(|s| matches!(s, IrStmt::Obs { .. }))
            .count()
    }
}

impl fmt::Display for IrStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrStmt::Assign(v, e) => write!(f, "{v} = {e}"),
            IrStmt::Obs { cond, exprs } => {
                write!(f, "OBS({cond}, [")?;
                for (i, e) in exprs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("])")
            }
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Jmp(l) => write!(f, "JMP l{l}"),
            Terminator::CJmp(c, t, e) => write!(f, "CJMP {c} l{t} l{e}"),
            Terminator::Halt => f.write_str("HALT"),
        }
    }
}

impl fmt::Display for IrProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "l{}:", b.label)?;
            for s in &b.stmts {
                writeln!(f, "  {s}")?;
            }
            writeln!(f, "  {}", b.term)?;
        }
        Ok(())
    }
}
