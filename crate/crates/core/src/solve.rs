//! Solver-independent interface: models, results and the backend trait.

use alloc::collections::BTreeMap;
use alloc::string::String;

use thiserror::Error;

use crate::ir::{Env, Expr, MemValue, Value, Var, VarName};
use crate::isa::Reg;

/// A satisfying assignment. Symbols a solver left out are unconstrained.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<Var, Value>,
}

impl Model {
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.values.get(&v)
    }

    /// Environment over both copies; anything missing is zero, false or
    /// an all-zero memory.
    pub fn to_env(&self) -> Env {
        let mut env = Env::new();
        for primed in [false, true] {
            let p = |v: Var| if primed { v.primed() } else { v };
            for n in 0..Reg::COUNT {
                env.set(p(Var::x(n)), Value::bv64(0));
            }
            env.set(p(Var::Z), Value::Bool(false));
            env.set(p(Var::N), Value::Bool(false));
            env.set(p(Var::M), Value::Mem(MemValue::default()));
            env.set(p(Var::DISCARD), Value::bv64(0));
        }
        for (v, val) in &self.values {
            env.set(*v, val.clone());
        }
        env
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverResult {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl SolverResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolverResult::Sat(_))
    }

    pub fn verdict(&self) -> &'static str {
        match self {
            SolverResult::Sat(_) => "sat",
            SolverResult::Unsat => "unsat",
            SolverResult::Unknown(_) => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("solver crashed: {0}")]
    Crash(String),
    #[error("solver timed out after {0} ms")]
    Timeout(u64),
    #[error("cannot parse solver model: {0}")]
    ModelParse(String),
    #[error("unsupported expression: {0}")]
    Unsupported(String),
}

/// A decision procedure for closed IR formulas.
pub trait Solver {
    fn name(&self) -> &str;
    fn check(&mut self, f: &Expr) -> Result<SolverResult, SolverError>;
}

/// Stable SMT-LIB symbol of a variable; the second copy gets a `p` suffix.
pub fn smt_name(v: Var) -> String {
    let base = match v.name {
        VarName::X(n) => alloc::format!("x{n}"),
        VarName::Z => "z".into(),
        VarName::N => "n".into(),
        VarName::M => "m".into(),
        VarName::Discard => "discard".into(),
    };
    if v.primed {
        base + "p"
    } else {
        base
    }
}

pub fn var_of_smt_name(s: &str) -> Option<Var> {
    let (base, primed) = match s.strip_suffix('p') {
        Some(b) => (b, true),
        None => (s, false),
    };
    let name = match base {
        "z" => VarName::Z,
        "n" => VarName::N,
        "m" => VarName::M,
        "discard" => VarName::Discard,
        _ => {
            let n: u8 = base.strip_prefix('x')?.parse().ok()?;
            if n >= Reg::COUNT {
                return None;
            }
            VarName::X(n)
        }
    };
    Some(Var { name, primed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in [Var::x(0), Var::x(30).primed(), Var::Z, Var::N.primed(), Var::M, Var::M.primed()] {
            assert_eq!(var_of_smt_name(&smt_name(v)), Some(v));
        }
        assert_eq!(smt_name(Var::x(3).primed()), "x3p");
        assert_eq!(var_of_smt_name("x31"), None);
        assert_eq!(var_of_smt_name("k!0"), None);
    }

    #[test]
    fn missing_symbols_default_to_zero() {
        let mut m = Model::default();
        m.values.insert(Var::x(1), Value::bv64(130));
        let env = m.to_env();
        assert_eq!(env.get(Var::x(1)), Some(&Value::bv64(130)));
        assert_eq!(env.get(Var::x(2).primed()), Some(&Value::bv64(0)));
        assert_eq!(env.get(Var::Z), Some(&Value::Bool(false)));
    }
}
