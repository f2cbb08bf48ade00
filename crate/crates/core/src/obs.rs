//! Observational models: what an attacker is assumed to see of each
//! memory access, as IR annotations and as a concrete projection.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concrete::{MemEvent, MemOp};
use crate::geometry::CacheGeometry;
use crate::ir::{Expr, IrExpr, IrProgram, IrStmt, VarName};
use crate::isa::{Instruction, Reg};
use crate::uarch::CacheState;

/// One non-silent concrete observation, a tuple of integers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<u64>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Program counter plus (op, tag, index) of each access.
    MultiWayPc,
    /// (op, tag, index) of each access.
    MultiWay,
    /// (op, tag, index), only for accesses to sets `>= visible_from`.
    Partitioned { visible_from: u64 },
    /// (op, index) of each access.
    DirectMapped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObsModel {
    pub kind: ModelKind,
    pub geometry: CacheGeometry,
    /// Derive accesses from the instruction text instead of the IR, so
    /// zero-register loads go unobserved. Kept to reproduce that bug.
    pub syntactic_obs: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected mwc-pc, mwc, pmwc:<set> or dc)")]
    Unknown(String),
    #[error("partition boundary {0} outside 0..={1}")]
    Boundary(u64, u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("cache geometries differ: {0:?} vs {1:?}")]
pub struct GeometryMismatch(pub CacheGeometry, pub CacheGeometry);

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::MultiWayPc => f.write_str("mwc-pc"),
            ModelKind::MultiWay => f.write_str("mwc"),
            ModelKind::Partitioned { visible_from } => write!(f, "pmwc:{visible_from}"),
            ModelKind::DirectMapped => f.write_str("dc"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        Ok(match s.trim() {
            "mwc-pc" => ModelKind::MultiWayPc,
            "mwc" => ModelKind::MultiWay,
            "dc" => ModelKind::DirectMapped,
            other => {
                let n = other.strip_prefix("pmwc:").ok_or_else(|| ModelError::Unknown(s.to_string()))?;
                let visible_from = n.parse().map_err(|_| ModelError::Unknown(s.to_string()))?;
                ModelKind::Partitioned { visible_from }
            }
        })
    }
}

impl fmt::Display for ObsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if self.syntactic_obs {
            f.write_str("+syntactic")?;
        }
        Ok(())
    }
}

/// A memory access found in an IR statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access {
    pub op: MemOp,
    pub addr: Expr,
    pub width: u8,
}

/// Loads and stores inside `e`, in evaluation order.
pub fn accesses_of(e: &Expr) -> Vec<Access> {
    let mut out = Vec::new();
    e.visit_dag(&mut |n| match &**n {
        IrExpr::Load { addr, width, .. } => out.push(Access { op: MemOp::Rd, addr: addr.clone(), width: *width }),
        IrExpr::Store { addr, width, .. } => out.push(Access { op: MemOp::Wt, addr: addr.clone(), width: *width }),
        _ => {}
    });
    out
}

impl ObsModel {
    pub fn new(kind: ModelKind, geometry: CacheGeometry) -> Result<Self, ModelError> {
        if let ModelKind::Partitioned { visible_from } = kind {
            if visible_from > geometry.sets() {
                return Err(ModelError::Boundary(visible_from, geometry.sets()));
            }
        }
        Ok(ObsModel { kind, geometry, syntactic_obs: false })
    }

    pub fn parse(spec: &str, geometry: CacheGeometry) -> Result<Self, ModelError> {
        ObsModel::new(spec.parse()?, geometry)
    }

    pub fn with_syntactic_obs(mut self, on: bool) -> Self {
        self.syntactic_obs = on;
        self
    }

    pub fn visible_from(&self) -> Option<u64> {
        match self.kind {
            ModelKind::Partitioned { visible_from } => Some(visible_from),
            _ => None,
        }
    }

    fn observes_pc(&self) -> bool {
        self.kind == ModelKind::MultiWayPc
    }

    /// Condition and expressions of the observation for one access.
    pub fn obs_for(&self, pc: usize, op: MemOp, addr: &Expr) -> (Expr, Vec<Expr>) {
        let g = &self.geometry;
        let op = Expr::bv(op.bit(), 1);
        let tag = g.tag_expr(addr.clone());
        let index = g.index_expr(addr.clone());
        match self.kind {
            ModelKind::MultiWayPc => (Expr::tt(), alloc::vec![Expr::c64(pc as u64), op, tag, index]),
            ModelKind::MultiWay => (Expr::tt(), alloc::vec![op, tag, index]),
            ModelKind::Partitioned { visible_from } => {
                (Expr::ule(Expr::c64(visible_from), index.clone()), alloc::vec![op, tag, index])
            }
            ModelKind::DirectMapped => (Expr::tt(), alloc::vec![op, index]),
        }
    }

    /// Inserts an `OBS` statement in front of every statement that
    /// accesses memory. The observation is placed before the access so it
    /// sees the address operands prior to any register overwrite, as in
    /// `ldr x1, [x1]`. Under the pc model every other instruction block
    /// gets a pc-only observation.
    pub fn annotate(&self, ir: &IrProgram) -> IrProgram {
        let mut out = ir.clone();
        for block in &mut out.blocks {
            let pc = block.source.unwrap_or(block.label);
            let mut stmts = Vec::with_capacity(block.stmts.len() * 2);
            let mut observed = false;
            for s in block.stmts.drain(..) {
                if let IrStmt::Assign(var, e) = &s {
                    let discarded = var.name == VarName::Discard;
                    if !(discarded && self.syntactic_obs) {
                        for acc in accesses_of(e) {
                            let (cond, exprs) = self.obs_for(pc, acc.op, &acc.addr);
                            stmts.push(IrStmt::Obs { cond, exprs });
                            observed = true;
                        }
                    }
                }
                stmts.push(s);
            }
            if self.observes_pc() && !observed && block.source.is_some() {
                stmts.insert(0, IrStmt::Obs { cond: Expr::tt(), exprs: alloc::vec![Expr::c64(pc as u64)] });
            }
            block.stmts = stmts;
        }
        out
    }

    /// Concrete projection of one executed instruction and the access it
    /// made; `None` is the silent observation.
    pub fn observe(&self, pc: usize, insn: &Instruction, event: Option<&MemEvent>) -> Option<Observation> {
        let ev = match event {
            Some(ev) => ev,
            None if self.observes_pc() => return Some(Observation(alloc::vec![pc as u64])),
            None => return None,
        };
        if self.syntactic_obs && matches!(insn, Instruction::Ldr { rt: Reg::Xzr, .. }) {
            return if self.observes_pc() { Some(Observation(alloc::vec![pc as u64])) } else { None };
        }
        let g = &self.geometry;
        let (op, tag, index) = (ev.op.bit(), g.tag(ev.addr), g.index(ev.addr));
        match self.kind {
            ModelKind::MultiWayPc => Some(Observation(alloc::vec![pc as u64, op, tag, index])),
            ModelKind::MultiWay => Some(Observation(alloc::vec![op, tag, index])),
            ModelKind::Partitioned { visible_from } => {
                (index >= visible_from).then(|| Observation(alloc::vec![op, tag, index]))
            }
            ModelKind::DirectMapped => Some(Observation(alloc::vec![op, index])),
        }
    }

    /// Whether two final cache states are indistinguishable to the
    /// attacker this model stands for. LRU order and dirtiness are never
    /// visible.
    pub fn compare_final(&self, c1: &CacheState, c2: &CacheState) -> Result<bool, GeometryMismatch> {
        let g = self.geometry;
        for c in [c1, c2] {
            if c.geometry() != g {
                return Err(GeometryMismatch(g, c.geometry()));
            }
        }
        Ok(self.distinguishing_sets(c1, c2).is_empty())
    }

    /// Set indices on which the comparator sees a difference.
    pub fn distinguishing_sets(&self, c1: &CacheState, c2: &CacheState) -> Vec<u64> {
        let from = self.visible_from().unwrap_or(0);
        (from..self.geometry.sets())
            .filter(|&s| match self.kind {
                ModelKind::DirectMapped => c1.valid_count(s) != c2.valid_count(s),
                _ => c1.valid_tags(s) != c2.valid_tags(s),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concrete::{run_concrete_trace, ConcreteState, MemRegion};
    use crate::ir::{run_ir, Env};
    use crate::isa::Program;
    use crate::transpile::transpile;
    use alloc::format;

    fn model(s: &str) -> ObsModel {
        ObsModel::parse(s, CacheGeometry::default()).unwrap()
    }

    #[test]
    fn model_names_round_trip() {
        for s in ["mwc-pc", "mwc", "pmwc:61", "dc"] {
            assert_eq!(format!("{}", model(s).kind), s);
        }
        assert!(matches!(ObsModel::parse("pmwc:200", CacheGeometry::default()), Err(ModelError::Boundary(200, 128))));
        assert!(ObsModel::parse("lru", CacheGeometry::default()).is_err());
    }

    #[test]
    fn partitioned_load_observation() {
        let ir = transpile(&Program::parse("ldr x2, [x1]").unwrap()).unwrap();
        let ann = model("pmwc:10").annotate(&ir);
        assert_eq!(
            format!("{}", ann.blocks[0].stmts[0]),
            "OBS((10 <=u ((X1 >> 6) & 127)), [0:1, (X1 >> 13), ((X1 >> 6) & 127)])"
        );
        assert!(matches!(ann.blocks[0].stmts[1], IrStmt::Assign(..)));
    }

    #[test]
    fn identity_without_memory_access() {
        let ir = transpile(&Program::parse("add x1, x1, #8\nnop").unwrap()).unwrap();
        for m in ["mwc", "pmwc:3", "dc"] {
            assert_eq!(model(m).annotate(&ir), ir);
        }
        assert_eq!(model("mwc-pc").annotate(&ir).obs_count(), 2);
    }

    #[test]
    fn zero_register_load_observation_depends_on_flag() {
        let ir = transpile(&Program::parse("ldr xzr, [x30]").unwrap()).unwrap();
        assert_eq!(model("mwc").annotate(&ir).obs_count(), 1);
        assert_eq!(model("mwc").with_syntactic_obs(true).annotate(&ir).obs_count(), 0);
    }

    #[test]
    fn annotated_interpretation_matches_projection() {
        let p = Program::parse("ldr x1, [x1]\nstr x1, [x2, #8]\nmov x3, #1\nldr xzr, [x2]").unwrap();
        let ir = transpile(&p).unwrap();
        let mut s = ConcreteState::new().with_reg(Reg::x(1), 0x8000_0040).with_reg(Reg::x(2), 0x8010_0cc0);
        s.write(0x8000_0040, 8, 0x8000_2000);
        let region = MemRegion::default();
        let trace = run_concrete_trace(&p, &s, &region).unwrap();
        for spec in ["mwc-pc", "mwc", "pmwc:51", "dc"] {
            for syn in [false, true] {
                let m = model(spec).with_syntactic_obs(syn);
                let run = run_ir(&m.annotate(&ir), &Env::from_state(&s), &region).unwrap();
                let mut events = trace.events.iter().peekable();
                let projected: Vec<_> = trace
                    .executed
                    .iter()
                    .filter_map(|&pc| {
                        let ev = events.next_if(|e| e.pc == pc);
                        m.observe(pc, &p.0[pc], ev)
                    })
                    .collect();
                assert_eq!(run.observations, projected, "{spec} syntactic={syn}");
            }
        }
    }
}
