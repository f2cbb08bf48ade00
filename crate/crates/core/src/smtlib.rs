//! SMT-LIB 2 output (QF_ABV) and model parsing.
//!
//! Registers are 64-bit vectors, flags 1-bit vectors and memories arrays
//! from 64-bit addresses to bytes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::ir::{BinOp, Expr, IrExpr, MemValue, Ty, UnOp, Value, Var};
use crate::solve::{smt_name, var_of_smt_name, Model, SolverError, SolverResult};

const MEM_SORT: &str = "(Array (_ BitVec 64) (_ BitVec 8))";

fn sort_name(t: Ty) -> String {
    match t {
        Ty::Bool => "Bool".into(),
        Ty::Bv(w) => alloc::format!("(_ BitVec {w})"),
        Ty::Mem => MEM_SORT.into(),
    }
}

fn var_sort(v: Var) -> String {
    match v.ty() {
        Ty::Bool => "(_ BitVec 1)".into(),
        t => sort_name(t),
    }
}

pub fn bv_literal(value: u64, width: u8) -> String {
    if width.is_multiple_of(4) {
        alloc::format!("#x{:0w$x}", value, w = (width / 4) as usize)
    } else {
        alloc::format!("#b{:0w$b}", value, w = width as usize)
    }
}

fn smt_op(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "bvadd",
        BinOp::Sub => "bvsub",
        BinOp::Mul => "bvmul",
        BinOp::And => "bvand",
        BinOp::Or => "bvor",
        BinOp::Shl => "bvshl",
        BinOp::Lshr => "bvlshr",
        BinOp::Eq => "=",
        BinOp::Ult => "bvult",
        BinOp::Ule => "bvule",
        BinOp::LAnd => "and",
        BinOp::LOr => "or",
        BinOp::Implies => "=>",
    }
}

/// Renders `assert f` as a complete script ending in `check-sat` and
/// `get-model`. Shared sub-terms and load addresses become `define-fun`s.
pub fn to_smtlib(f: &Expr) -> Result<String, SolverError> {
    let ty = f.ty().map_err(|e| SolverError::Unsupported(e.to_string()))?;
    if ty != Ty::Bool {
        return Err(SolverError::Unsupported(alloc::format!("formula of sort {ty}")));
    }
    let mut out = String::from("(set-logic QF_ABV)\n");
    for v in f.vars() {
        let _ = writeln!(out, "(declare-fun {} () {})", smt_name(v), var_sort(v));
    }
    let mut w = Writer::new(f);
    let body = w.term(f);
    out.push_str(&w.defs);
    let _ = writeln!(out, "(assert {body})");
    out.push_str("(check-sat)\n(get-model)\n");
    Ok(out)
}

struct Writer {
    named: BTreeMap<usize, Option<String>>,
    sorts: BTreeMap<usize, Ty>,
    defs: String,
    next: usize,
}

impl Writer {
    fn new(root: &Expr) -> Self {
        let mut uses: BTreeMap<usize, usize> = BTreeMap::new();
        let mut sorts: BTreeMap<usize, Ty> = BTreeMap::new();
        let mut named = BTreeMap::new();
        root.visit_dag(&mut |e| {
            for k in e.children() {
                *uses.entry(k.node_id()).or_default() += 1;
            }
            if let IrExpr::Load { addr, width, .. } = &**e {
                if *width > 1 && !addr.children().is_empty() {
                    named.insert(addr.node_id(), None);
                }
            }
            // the formula is already type checked, so child sorts are known
            let t = match &**e {
                IrExpr::Const { width, .. } => Ty::Bv(*width),
                IrExpr::Bool(_) | IrExpr::Unary(..) => Ty::Bool,
                IrExpr::Var(v) => v.ty(),
                IrExpr::MemConst(_) | IrExpr::Store { .. } => Ty::Mem,
                IrExpr::Binary(op, a, _) => match op {
                    BinOp::Eq | BinOp::Ult | BinOp::Ule | BinOp::LAnd | BinOp::LOr | BinOp::Implies => Ty::Bool,
                    _ => sorts[&a.node_id()],
                },
                IrExpr::Ite(_, a, _) => sorts[&a.node_id()],
                IrExpr::Load { width, .. } => Ty::Bv(width * 8),
            };
            sorts.insert(e.node_id(), t);
        });
        for (id, n) in uses {
            if n > 1 {
                named.entry(id).or_insert(None);
            }
        }
        Writer { named, sorts, defs: String::new(), next: 0 }
    }

    fn term(&mut self, e: &Expr) -> String {
        let id = e.node_id();
        let compound = !e.children().is_empty();
        if compound {
            if let Some(Some(name)) = self.named.get(&id) {
                return name.clone();
            }
        }
        let text = self.inline(e);
        if compound && self.named.contains_key(&id) {
            let name = alloc::format!("t{}", self.next);
            self.next += 1;
            let _ = writeln!(self.defs, "(define-fun {name} () {} {text})", sort_name(self.sorts[&id]));
            self.named.insert(id, Some(name.clone()));
            return name;
        }
        text
    }

    fn inline(&mut self, e: &Expr) -> String {
        match &**e {
            IrExpr::Const { value, width } => bv_literal(*value, *width),
            IrExpr::Bool(b) => b.to_string(),
            IrExpr::Var(v) => match v.ty() {
                Ty::Bool => alloc::format!("(= {} #b1)", smt_name(*v)),
                _ => smt_name(*v),
            },
            IrExpr::MemConst(b) => alloc::format!("((as const {MEM_SORT}) {})", bv_literal(*b as u64, 8)),
            IrExpr::Unary(UnOp::Not, a) => alloc::format!("(not {})", self.term(a)),
            IrExpr::Binary(op, a, b) => {
                let (x, y) = (self.term(a), self.term(b));
                alloc::format!("({} {x} {y})", smt_op(*op))
            }
            IrExpr::Ite(c, a, b) => {
                let (c, a, b) = (self.term(c), self.term(a), self.term(b));
                alloc::format!("(ite {c} {a} {b})")
            }
            IrExpr::Load { mem, addr, width } => {
                let (m, a) = (self.term(mem), self.term(addr));
                if *width == 1 {
                    return alloc::format!("(select {m} {a})");
                }
                // little endian: the highest address is the most significant byte
                let mut s = String::from("(concat");
                for k in (0..*width as u64).rev() {
                    let _ = write!(s, " (select {m} {})", offset_addr(&a, k));
                }
                s.push(')');
                s
            }
            IrExpr::Store { mem, addr, value, width } => {
                let (m, a, v) = (self.term(mem), self.term(addr), self.term(value));
                let mut s = m;
                for k in 0..*width as u64 {
                    let byte = alloc::format!("((_ extract {} {}) {v})", 8 * k + 7, 8 * k);
                    s = alloc::format!("(store {s} {} {byte})", offset_addr(&a, k));
                }
                s
            }
        }
    }
}

fn offset_addr(a: &str, k: u64) -> String {
    if k == 0 {
        a.to_string()
    } else {
        alloc::format!("(bvadd {a} {})", bv_literal(k, 64))
    }
}

/// A parsed s-expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s) => Some(s),
            Sexp::List(_) => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(l) => Some(l),
            Sexp::Atom(_) => None,
        }
    }
}

fn perr(msg: impl Into<String>) -> SolverError {
    SolverError::ModelParse(msg.into())
}

/// Parses a sequence of s-expressions. `;` comments and `|quoted|`
/// symbols are handled; strings are kept as atoms.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SolverError> {
    let mut stack: Vec<Vec<Sexp>> = alloc::vec![Vec::new()];
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().ok_or_else(|| perr("unbalanced `)`"))?;
                stack.last_mut().ok_or_else(|| perr("unbalanced `)`"))?.push(Sexp::List(done));
            }
            ';' => {
                while chars.next_if(|&(_, c)| c != '\n').is_some() {}
            }
            c if c.is_whitespace() => {}
            '|' | '"' => {
                let end = text[i + 1..].find(c).ok_or_else(|| perr("unterminated quote"))? + i + 1;
                let inner = &text[i + 1..end];
                stack.last_mut().unwrap().push(Sexp::Atom(inner.to_string()));
                while chars.next_if(|&(j, _)| j <= end).is_some() {}
            }
            _ => {
                let mut end = text.len();
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' {
                        end = j;
                        break;
                    }
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexp::Atom(text[i..end].to_string()));
            }
        }
    }
    if stack.len() != 1 {
        return Err(perr("unbalanced `(`"));
    }
    Ok(stack.pop().unwrap())
}

/// Parses solver output: a verdict line, then for `sat` the model.
pub fn parse_solver_output(text: &str) -> Result<SolverResult, SolverError> {
    let items = parse_sexps(text)?;
    let verdict = items.first().and_then(Sexp::atom).ok_or_else(|| perr("missing verdict"))?;
    match verdict {
        "unsat" => Ok(SolverResult::Unsat),
        "unknown" => Ok(SolverResult::Unknown("solver returned unknown".into())),
        "sat" => {
            let model = items.get(1).ok_or_else(|| perr("sat without a model"))?;
            Ok(SolverResult::Sat(parse_model(model)?))
        }
        other => Err(SolverError::Crash(other.to_string())),
    }
}

/// Reads a `(model ...)` or bare `(...)` list of `define-fun`s.
pub fn parse_model(s: &Sexp) -> Result<Model, SolverError> {
    let mut defs = s.list().ok_or_else(|| perr("model is not a list"))?;
    if defs.first().and_then(Sexp::atom) == Some("model") {
        defs = &defs[1..];
    }
    // functions referenced through `as-array`
    let mut funs: BTreeMap<String, (String, &Sexp)> = BTreeMap::new();
    for d in defs {
        let l = d.list().ok_or_else(|| perr("definition is not a list"))?;
        if l.len() == 5 && l[0].atom() == Some("define-fun") {
            if let (Some(name), Some([param])) = (l[1].atom(), l[2].list()) {
                if let Some(p) = param.list().and_then(|p| p.first()).and_then(Sexp::atom) {
                    funs.insert(name.to_string(), (p.to_string(), &l[4]));
                }
            }
        }
    }
    let mut model = Model::default();
    for d in defs {
        let l = d.list().unwrap();
        if l.len() != 5 || l[0].atom() != Some("define-fun") {
            continue;
        }
        let name = l[1].atom().ok_or_else(|| perr("bad definition name"))?;
        let var = match var_of_smt_name(name) {
            Some(v) => v,
            None => continue,
        };
        if l[2].list().is_some_and(|p| !p.is_empty()) {
            continue;
        }
        let value = match var.ty() {
            Ty::Mem => Value::Mem(array_value(&l[4], &funs, &Lets::new())?),
            Ty::Bool => Value::Bool(bv_value(&l[4])?.0 == 1),
            Ty::Bv(_) => {
                let (v, w) = bv_value(&l[4])?;
                Value::Bv { value: v, width: w }
            }
        };
        model.values.insert(var, value);
    }
    Ok(model)
}

fn bv_value(s: &Sexp) -> Result<(u64, u8), SolverError> {
    match s {
        Sexp::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                let v = u64::from_str_radix(h, 16).map_err(|_| perr(a.clone()))?;
                Ok((v, (h.len() * 4) as u8))
            } else if let Some(b) = a.strip_prefix("#b") {
                let v = u64::from_str_radix(b, 2).map_err(|_| perr(a.clone()))?;
                Ok((v, b.len() as u8))
            } else {
                Err(perr(alloc::format!("not a bit-vector literal: {a}")))
            }
        }
        Sexp::List(l) => match l.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(bv), Sexp::Atom(w)] if u == "_" && bv.starts_with("bv") => {
                let v = bv[2..].parse().map_err(|_| perr(bv.clone()))?;
                let w = w.parse().map_err(|_| perr(w.clone()))?;
                Ok((v, w))
            }
            _ => Err(perr("not a bit-vector literal")),
        },
    }
}

type Funs<'a> = BTreeMap<String, (String, &'a Sexp)>;
type Lets<'a> = BTreeMap<String, &'a Sexp>;

/// Interprets an array term under the enclosing `let` bindings.
fn array_value<'a>(s: &'a Sexp, funs: &Funs<'_>, lets: &Lets<'a>) -> Result<MemValue, SolverError> {
    let l = match s {
        Sexp::List(l) => l.as_slice(),
        Sexp::Atom(a) => match lets.get(a) {
            Some(bound) => return array_value(bound, funs, lets),
            None => return Err(perr(alloc::format!("unexpected array atom {a}"))),
        },
    };
    match l {
        // ((as const (Array ..)) v)
        [Sexp::List(head), v] if head.first().and_then(Sexp::atom) == Some("as") => {
            Ok(MemValue { default: bv_value(v)?.0 as u8, bytes: BTreeMap::new() })
        }
        [Sexp::Atom(store), a, i, v] if store == "store" => {
            let mut m = array_value(a, funs, lets)?;
            m.bytes.insert(bv_value(i)?.0, bv_value(v)?.0 as u8);
            Ok(m)
        }
        [Sexp::Atom(u), Sexp::Atom(asarr), Sexp::Atom(f)] if u == "_" && asarr == "as-array" => {
            let (p, body) = funs.get(f).ok_or_else(|| perr(alloc::format!("unknown function {f}")))?;
            fun_body(body, p)
        }
        [Sexp::Atom(lambda), Sexp::List(params), body] if lambda == "lambda" => {
            let p = params
                .first()
                .and_then(Sexp::list)
                .and_then(|p| p.first())
                .and_then(Sexp::atom)
                .ok_or_else(|| perr("bad lambda"))?;
            fun_body(body, p)
        }
        [Sexp::Atom(kw), Sexp::List(binds), body] if kw == "let" => {
            let mut inner = lets.clone();
            for b in binds {
                match b.list() {
                    Some([Sexp::Atom(name), v]) => {
                        inner.insert(name.clone(), v);
                    }
                    _ => return Err(perr("bad let binding")),
                }
            }
            array_value(body, funs, &inner)
        }
        _ => Err(perr("unsupported array term")),
    }
}

/// `(ite (= p c) v rest)` chains over the parameter `p`.
fn fun_body(body: &Sexp, p: &str) -> Result<MemValue, SolverError> {
    let mut m = MemValue::default();
    let mut cur = body;
    loop {
        match cur {
            Sexp::List(l) if l.len() == 4 && l[0].atom() == Some("ite") => {
                let cond = l[1].list().ok_or_else(|| perr("bad ite condition"))?;
                let key = match cond {
                    [Sexp::Atom(eq), a, b] if eq == "=" => {
                        if a.atom() == Some(p) {
                            bv_value(b)?.0
                        } else if b.atom() == Some(p) {
                            bv_value(a)?.0
                        } else {
                            return Err(perr("ite condition does not test the parameter"));
                        }
                    }
                    _ => return Err(perr("unsupported ite condition")),
                };
                m.bytes.entry(key).or_insert(bv_value(&l[2])?.0 as u8);
                cur = &l[3];
            }
            other => {
                m.default = bv_value(other)?.0 as u8;
                return Ok(m);
            }
        }
    }
}

impl core::fmt::Display for Sexp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(l) => {
                f.write_str("(")?;
                for (i, x) in l.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[allow(dead_code)]
fn boxed(s: Sexp) -> Box<Sexp> {
    Box::new(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CacheGeometry;
    use crate::ir::{parse_expr, ParseCtx};

    fn p(s: &str) -> Expr {
        parse_expr(s, &ParseCtx::with_geometry(CacheGeometry::default())).unwrap()
    }

    #[test]
    fn flag_script() {
        let s = to_smtlib(&p("Z")).unwrap();
        assert_eq!(
            s,
            "(set-logic QF_ABV)\n(declare-fun z () (_ BitVec 1))\n(assert (= z #b1))\n(check-sat)\n(get-model)\n"
        );
    }

    #[test]
    fn loads_concatenate_bytes_little_endian() {
        let s = to_smtlib(&p("LOAD(M', X1 + 8, 2) == 5:16")).unwrap();
        assert!(s.contains("(declare-fun mp () (Array (_ BitVec 64) (_ BitVec 8)))"), "{s}");
        assert!(s.contains("(define-fun t0 () (_ BitVec 64) (bvadd x1 #x0000000000000008))"), "{s}");
        assert!(s.contains("(concat (select mp (bvadd t0 #x0000000000000001)) (select mp t0))"), "{s}");
    }

    #[test]
    fn shared_terms_are_defined_once() {
        let a = p("X1 * X2");
        let f = Expr::eq(Expr::add(a.clone(), a.clone()), a);
        let s = to_smtlib(&f).unwrap();
        assert_eq!(s.matches("bvmul").count(), 1, "{s}");
    }

    #[test]
    fn rejects_non_boolean() {
        assert!(matches!(to_smtlib(&p("X1")), Err(SolverError::Unsupported(_))));
    }

    #[test]
    fn parses_models_in_several_shapes() {
        let out = "sat\n(\n  (define-fun x1 () (_ BitVec 64)\n    #x0000000000000082)\n  (define-fun z () (_ BitVec 1)\n    #b1)\n  (define-fun m () (Array (_ BitVec 64) (_ BitVec 8))\n    (store ((as const (Array (_ BitVec 64) (_ BitVec 8))) #x05) #x8000000000000001 #x07))\n  (define-fun mp () (Array (_ BitVec 64) (_ BitVec 8)) (_ as-array k!0))\n  (define-fun k!0 ((x!0 (_ BitVec 64))) (_ BitVec 8) (ite (= x!0 #x0000000000000010) #x01 (ite (= #x0000000000000011 x!0) #x02 #x00)))\n)\n";
        let r = parse_solver_output(out).unwrap();
        let m = match r {
            SolverResult::Sat(m) => m,
            other => panic!("{other:?}"),
        };
        assert_eq!(m.get(Var::x(1)), Some(&Value::bv64(130)));
        assert_eq!(m.get(Var::Z), Some(&Value::Bool(true)));
        let mem = m.get(Var::M).unwrap().as_mem().unwrap();
        assert_eq!((mem.default, mem.byte(0x8000_0000_0000_0001)), (5, 7));
        let memp = m.get(Var::M.primed()).unwrap().as_mem().unwrap();
        assert_eq!((memp.byte(0x10), memp.byte(0x11), memp.byte(0x12)), (1, 2, 0));
        let lam = parse_sexps("(model (define-fun m () (Array (_ BitVec 64) (_ BitVec 8)) (lambda ((x (_ BitVec 64))) (ite (= x (_ bv4 64)) (_ bv9 8) (_ bv0 8)))))").unwrap();
        let m = parse_model(&lam[0]).unwrap();
        assert_eq!(m.get(Var::M).unwrap().as_mem().unwrap().byte(4), 9);
        let with_let = parse_sexps("((define-fun m () (Array (_ BitVec 64) (_ BitVec 8)) (let ((a!1 (store ((as const (Array (_ BitVec 64) (_ BitVec 8))) #x12) #x0000000000000003 #x00))) (store a!1 #x0000000000000001 #x34))))").unwrap();
        let mem = parse_model(&with_let[0]).unwrap().get(Var::M).unwrap().as_mem().unwrap().clone();
        assert_eq!((mem.byte(1), mem.byte(2), mem.byte(3)), (0x34, 0x12, 0));
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_solver_output("unsat\n").unwrap(), SolverResult::Unsat);
        assert!(matches!(parse_solver_output("unknown").unwrap(), SolverResult::Unknown(_)));
        assert!(matches!(parse_solver_output("(error \"x\")"), Err(SolverError::ModelParse(_)) | Err(SolverError::Crash(_))));
        assert!(parse_sexps("(a (b)").is_err());
    }
}
