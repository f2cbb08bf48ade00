//! Backtracking model finder over finite candidate domains.
//!
//! Every variable of the query draws its value from a candidate list.
//! Partial assignments are pruned with three-valued evaluation. When the
//! caller declares the domains complete (the query can only be satisfied
//! by candidate values) an exhausted search is reported as unsat,
//! otherwise as unknown.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ir::{eval_partial, Expr, MemValue, Ty, Value, Var};
use crate::solve::{Model, Solver, SolverError, SolverResult};

#[derive(Clone, Debug)]
pub struct BruteSolver {
    /// Candidates for specific variables.
    pub domains: BTreeMap<Var, Vec<Value>>,
    /// Candidates for 64-bit variables without an entry in `domains`.
    pub default_bv: Vec<u64>,
    /// Candidates for memories without an entry in `domains`.
    pub default_mem: Vec<MemValue>,
    /// The search is exhaustive: no model outside the candidates exists.
    pub complete: bool,
    /// Give up after this many full assignments.
    pub budget: u64,
}

impl Default for BruteSolver {
    fn default() -> Self {
        BruteSolver {
            domains: BTreeMap::new(),
            default_bv: alloc::vec![0],
            default_mem: alloc::vec![MemValue::default()],
            complete: false,
            budget: u64::MAX,
        }
    }
}

impl BruteSolver {
    pub fn new(default_bv: Vec<u64>, default_mem: Vec<MemValue>) -> Self {
        BruteSolver { default_bv, default_mem, ..Default::default() }
    }

    pub fn with_domain(mut self, v: Var, values: Vec<Value>) -> Self {
        self.domains.insert(v, values);
        self
    }

    pub fn complete(mut self, on: bool) -> Self {
        self.complete = on;
        self
    }

    fn candidates(&self, v: Var) -> Vec<Value> {
        if let Some(d) = self.domains.get(&v) {
            return d.clone();
        }
        match v.ty() {
            Ty::Bool => alloc::vec![Value::Bool(false), Value::Bool(true)],
            Ty::Bv(w) => self.default_bv.iter().map(|&x| Value::Bv { value: x & crate::ir::mask(w), width: w }).collect(),
            Ty::Mem => self.default_mem.iter().cloned().map(Value::Mem).collect(),
        }
    }

    /// All models of `f` within the domains, up to `limit`.
    pub fn models(&self, f: &Expr, limit: usize) -> Vec<Model> {
        let mut out = Vec::new();
        let vars: Vec<Var> = f.vars().into_iter().collect();
        let doms: Vec<Vec<Value>> = vars.iter().map(|v| self.candidates(*v)).collect();
        let mut st = Search { f, vars: &vars, doms: &doms, assigned: BTreeMap::new(), budget: self.budget };
        st.go(0, &mut |m| {
            out.push(m);
            out.len() < limit
        });
        out
    }
}

struct Search<'a> {
    f: &'a Expr,
    vars: &'a [Var],
    doms: &'a [Vec<Value>],
    assigned: BTreeMap<Var, Value>,
    budget: u64,
}

impl Search<'_> {
    /// Returns false once the callback asks to stop or the budget runs out.
    fn go(&mut self, k: usize, found: &mut dyn FnMut(Model) -> bool) -> bool {
        let lookup = |v: Var| self.assigned.get(&v).cloned();
        match eval_partial(self.f, &lookup) {
            Some(Value::Bool(false)) => return true,
            Some(Value::Bool(true)) if k == self.vars.len() => {
                return found(Model { values: self.assigned.clone() });
            }
            _ => {}
        }
        if k == self.vars.len() {
            // fully assigned yet undecided: evaluation failed, skip
            return true;
        }
        for val in &self.doms[k] {
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
            self.assigned.insert(self.vars[k], val.clone());
            if !self.go(k + 1, found) {
                return false;
            }
        }
        self.assigned.remove(&self.vars[k]);
        true
    }
}

impl Solver for BruteSolver {
    fn name(&self) -> &str {
        "brute"
    }

    fn check(&mut self, f: &Expr) -> Result<SolverResult, SolverError> {
        if f.ty().map_err(|e| SolverError::Unsupported(alloc::format!("{e}")))? != Ty::Bool {
            return Err(SolverError::Unsupported(String::from("formula is not boolean")));
        }
        let vars: Vec<Var> = f.vars().into_iter().collect();
        let doms: Vec<Vec<Value>> = vars.iter().map(|v| self.candidates(*v)).collect();
        let mut st = Search { f, vars: &vars, doms: &doms, assigned: BTreeMap::new(), budget: self.budget };
        let mut model = None;
        let finished = st.go(0, &mut |m| {
            model = Some(m);
            false
        });
        Ok(match model {
            Some(m) => SolverResult::Sat(m),
            None if finished && self.complete => SolverResult::Unsat,
            None if finished => SolverResult::Unknown(String::from("no model among the candidates")),
            None => SolverResult::Unknown(String::from("search budget exhausted")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CacheGeometry;
    use crate::ir::{eval_bool, parse_expr, ParseCtx};

    fn p(s: &str) -> Expr {
        parse_expr(s, &ParseCtx::with_geometry(CacheGeometry::reduced())).unwrap()
    }

    #[test]
    fn finds_models_and_they_satisfy() {
        let mut s = BruteSolver::new((0..64).collect(), alloc::vec![]);
        let f = p("index(X1) == 3 && X1 != X2 && index(X2) == index(X1)");
        match s.check(&f).unwrap() {
            SolverResult::Sat(m) => assert!(eval_bool(&f, &m.to_env()).unwrap()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contradiction_is_unsat_only_when_complete() {
        let f = p("index(X1) == 3 && index(X1) == 1");
        let mut s = BruteSolver::new((0..64).collect(), alloc::vec![]);
        assert!(matches!(s.check(&f).unwrap(), SolverResult::Unknown(_)));
        assert_eq!(s.complete(true).check(&f).unwrap(), SolverResult::Unsat);
    }

    #[test]
    fn true_is_sat_and_memory_candidates_are_used() {
        let mut s = BruteSolver::default();
        assert!(s.check(&Expr::tt()).unwrap().is_sat());
        let mut img = MemValue::default();
        img.write(0x100, 8, 0x108);
        let mut s = BruteSolver::new(alloc::vec![0x100], alloc::vec![MemValue::default(), img]);
        let f = p("LOAD(M, X1, 8) == 264");
        assert!(s.check(&f).unwrap().is_sat());
    }

    #[test]
    fn enumerates_all_models() {
        let s = BruteSolver::new((0..8).collect(), alloc::vec![]);
        let ms = s.models(&p("X1 <u 3 && Z"), 100);
        assert_eq!(ms.len(), 3);
    }

    #[test]
    fn budget_gives_unknown() {
        let mut s = BruteSolver::new((0..64).collect(), alloc::vec![]);
        s.budget = 10;
        assert!(matches!(s.check(&p("X1 == 63 && X2 == 63")).unwrap(), SolverResult::Unknown(_)));
    }
}
