use alloc::collections::BTreeMap;
use alloc::string::String;

use thiserror::Error;

use super::expr::{mask, BinOp, Expr, IrExpr, UnOp, Var, VarName};
use crate::concrete::{ConcreteState, ExecError, MemOp};
use crate::isa::Reg;

/// A byte memory: every address holds `default` unless overwritten.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MemValue {
    pub default: u8,
    pub bytes: BTreeMap<u64, u8>,
}

impl MemValue {
    pub fn from_bytes(bytes: BTreeMap<u64, u8>) -> Self {
        MemValue { default: 0, bytes }
    }

    pub fn byte(&self, addr: u64) -> u8 {
        self.bytes.get(&addr).copied().unwrap_or(self.default)
    }

    pub fn read(&self, addr: u64, width: u8) -> u64 {
        (0..width as u64).fold(0, |acc, k| acc | (self.byte(addr.wrapping_add(k)) as u64) << (8 * k))
    }

    pub fn write(&mut self, addr: u64, width: u8, value: u64) {
        for k in 0..width as u64 {
            self.bytes.insert(addr.wrapping_add(k), (value >> (8 * k)) as u8);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Bool(bool),
    Bv { value: u64, width: u8 },
    Mem(MemValue),
}

impl Value {
    pub fn bv64(v: u64) -> Value {
        Value::Bv { value: v, width: 64 }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Scalar view: bit-vectors by value, booleans as 0/1.
    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Value::Bool(b) => Some(*b as u64),
            Value::Bv { value, .. } => Some(*value),
            Value::Mem(_) => None,
        }
    }

    pub fn as_mem(&self) -> Option<&MemValue> {
        match self {
            Value::Mem(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(Var),
    #[error("ill-typed operand in {0}")]
    Type(String),
    #[error(transparent)]
    Access(#[from] ExecError),
}

/// Variable assignment over both state copies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Env {
    vars: BTreeMap<Var, Value>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn get(&self, v: Var) -> Option<&Value> {
        self.vars.get(&v)
    }

    pub fn set(&mut self, v: Var, val: Value) {
        self.vars.insert(v, val);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Value)> {
        self.vars.iter()
    }

    /// Binds the registers, flags and memory of `s` on the chosen copy.
    pub fn insert_state(&mut self, s: &ConcreteState, primed: bool) {
        let p = |v: Var| if primed { v.primed() } else { v };
        for n in 0..Reg::COUNT {
            self.set(p(Var::x(n)), Value::bv64(s.regs[n as usize]));
        }
        self.set(p(Var::Z), Value::Bool(s.z));
        self.set(p(Var::N), Value::Bool(s.n));
        self.set(p(Var::M), Value::Mem(MemValue::from_bytes(s.mem.clone())));
        self.set(p(Var::DISCARD), Value::bv64(0));
    }

    pub fn from_state(s: &ConcreteState) -> Self {
        let mut env = Env::new();
        env.insert_state(s, false);
        env
    }

    pub fn from_pair(s1: &ConcreteState, s2: &ConcreteState) -> Self {
        let mut env = Env::new();
        env.insert_state(s1, false);
        env.insert_state(s2, true);
        env
    }

    /// Reads one copy back into a concrete state. Memory bytes equal to the
    /// memory default are dropped unless the default is nonzero.
    pub fn to_state(&self, primed: bool) -> ConcreteState {
        let p = |v: Var| if primed { v.primed() } else { v };
        let mut s = ConcreteState::new();
        for n in 0..Reg::COUNT {
            if let Some(v) = self.get(p(Var::x(n))).and_then(Value::as_u64) {
                s.regs[n as usize] = v;
            }
        }
        s.z = self.get(p(Var::Z)).and_then(Value::as_bool).unwrap_or(false);
        s.n = self.get(p(Var::N)).and_then(Value::as_bool).unwrap_or(false);
        if let Some(m) = self.get(p(Var::M)).and_then(Value::as_mem) {
            s.mem = m.bytes.clone();
        }
        s
    }
}

/// Called for every load (`Rd`) and store (`Wt`) whose address is known.
pub type AccessHook<'a> = dyn FnMut(MemOp, u64, u8) -> Result<(), ExecError> + 'a;

/// Evaluates under a total environment.
pub fn eval(e: &Expr, env: &Env) -> Result<Value, EvalError> {
    eval_with(e, env, None)
}

pub fn eval_bool(e: &Expr, env: &Env) -> Result<bool, EvalError> {
    eval(e, env)?.as_bool().ok_or_else(|| EvalError::Type(alloc::format!("{e}")))
}

pub fn eval_with(e: &Expr, env: &Env, hook: Option<&mut AccessHook<'_>>) -> Result<Value, EvalError> {
    let mut ev = Evaluator { lookup: &|v| env.get(v).cloned(), hook, memo: BTreeMap::new() };
    match ev.go(e)? {
        Some(v) => Ok(v),
        None => {
            // an unknown result under a total lookup means an unbound variable
            let missing = e.vars().into_iter().find(|v| env.get(*v).is_none());
            Err(match missing {
                Some(v) => EvalError::Unbound(v),
                None => EvalError::Type(alloc::format!("{e}")),
            })
        }
    }
}

/// Three-valued evaluation: variables for which `lookup` yields `None`
/// are unknown, and connectives follow Kleene logic. `Some(v)` means the
/// value is determined whatever the unknowns are.
pub fn eval_partial(e: &Expr, lookup: &dyn Fn(Var) -> Option<Value>) -> Option<Value> {
    let mut ev = Evaluator { lookup, hook: None, memo: BTreeMap::new() };
    ev.go(e).ok().flatten()
}

struct Evaluator<'l, 'h, 'a> {
    lookup: &'l dyn Fn(Var) -> Option<Value>,
    hook: Option<&'h mut AccessHook<'a>>,
    memo: BTreeMap<usize, Option<Value>>,
}

fn ty_err(op: &str) -> EvalError {
    EvalError::Type(op.into())
}

impl Evaluator<'_, '_, '_> {
    fn go(&mut self, e: &Expr) -> Result<Option<Value>, EvalError> {
        if let Some(v) = self.memo.get(&e.node_id()) {
            return Ok(v.clone());
        }
        let v = self.node(e)?;
        self.memo.insert(e.node_id(), v.clone());
        Ok(v)
    }

    fn access(&mut self, op: MemOp, addr: u64, width: u8) -> Result<(), EvalError> {
        if let Some(h) = self.hook.as_mut() {
            h(op, addr, width)?;
        }
        Ok(())
    }

    fn node(&mut self, e: &Expr) -> Result<Option<Value>, EvalError> {
        Ok(match &**e {
            IrExpr::Const { value, width } => Some(Value::Bv { value: *value, width: *width }),
            IrExpr::Bool(b) => Some(Value::Bool(*b)),
            IrExpr::MemConst(b) => Some(Value::Mem(MemValue { default: *b, bytes: BTreeMap::new() })),
            IrExpr::Var(v) => match (self.lookup)(*v) {
                Some(x) => Some(x),
                None if v.name == VarName::Discard => Some(Value::bv64(0)),
                None => None,
            },
            IrExpr::Unary(UnOp::Not, a) => match self.go(a)? {
                Some(Value::Bool(b)) => Some(Value::Bool(!b)),
                Some(_) => return Err(ty_err("!")),
                None => None,
            },
            IrExpr::Binary(op, a, b) => self.binary(*op, a, b)?,
            IrExpr::Ite(c, a, b) => match self.go(c)? {
                Some(Value::Bool(true)) => self.go(a)?,
                Some(Value::Bool(false)) => self.go(b)?,
                Some(_) => return Err(ty_err("ite")),
                None => {
                    let (x, y) = (self.go(a)?, self.go(b)?);
                    match (x, y) {
                        (Some(x), Some(y)) if x == y => Some(x),
                        _ => None,
                    }
                }
            },
            IrExpr::Load { mem, addr, width } => {
                let m = self.go(mem)?;
                let a = self.go(addr)?;
                match (m, a) {
                    (Some(Value::Mem(m)), Some(Value::Bv { value: a, .. })) => {
                        self.access(MemOp::Rd, a, *width)?;
                        Some(Value::Bv { value: m.read(a, *width), width: width * 8 })
                    }
                    (Some(Value::Mem(_)) | None, Some(Value::Bv { .. }) | None) => None,
                    _ => return Err(ty_err("LOAD")),
                }
            }
            IrExpr::Store { mem, addr, value, width } => {
                let m = self.go(mem)?;
                let a = self.go(addr)?;
                let v = self.go(value)?;
                match (m, a, v) {
                    (Some(Value::Mem(mut m)), Some(Value::Bv { value: a, .. }), Some(Value::Bv { value: v, .. })) => {
                        self.access(MemOp::Wt, a, *width)?;
                        m.write(a, *width, v);
                        Some(Value::Mem(m))
                    }
                    _ => None,
                }
            }
        })
    }

    fn binary(&mut self, op: BinOp, a: &Expr, b: &Expr) -> Result<Option<Value>, EvalError> {
        let x = self.go(a)?;
        match op {
            BinOp::LAnd | BinOp::LOr | BinOp::Implies => {
                let xb = match &x {
                    Some(Value::Bool(v)) => Some(*v),
                    Some(_) => return Err(ty_err(op.symbol())),
                    None => None,
                };
                // short-circuit on a determining left operand
                match (op, xb) {
                    (BinOp::LAnd, Some(false)) => return Ok(Some(Value::Bool(false))),
                    (BinOp::LOr, Some(true)) | (BinOp::Implies, Some(false)) => {
                        return Ok(Some(Value::Bool(true)))
                    }
                    _ => {}
                }
                let yb = match self.go(b)? {
                    Some(Value::Bool(v)) => Some(v),
                    Some(_) => return Err(ty_err(op.symbol())),
                    None => None,
                };
                let xb = if op == BinOp::Implies { xb.map(|v| !v) } else { xb };
                let r = if op == BinOp::LAnd { kleene_and(xb, yb) } else { kleene_or(xb, yb) };
                return Ok(r.map(Value::Bool));
            }
            _ => {}
        }
        let y = self.go(b)?;
        let (x, y) = match (x, y) {
            (Some(x), Some(y)) => (x, y),
            _ => return Ok(None),
        };
        Ok(Some(match op {
            BinOp::Eq => Value::Bool(x == y),
            BinOp::Ult | BinOp::Ule => {
                let (p, q) = match (&x, &y) {
                    (Value::Bv { value: p, .. }, Value::Bv { value: q, .. }) => (*p, *q),
                    _ => return Err(ty_err(op.symbol())),
                };
                Value::Bool(if op == BinOp::Ult { p < q } else { p <= q })
            }
            _ => {
                let (p, q, w) = match (&x, &y) {
                    (Value::Bv { value: p, width }, Value::Bv { value: q, .. }) => (*p, *q, *width),
                    _ => return Err(ty_err(op.symbol())),
                };
                Value::Bv { value: arith(op, p, q, w), width: w }
            }
        }))
    }
}

fn kleene_and(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn kleene_or(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

pub(crate) fn arith(op: BinOp, a: u64, b: u64, width: u8) -> u64 {
    let v = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Shl if b >= width as u64 => 0,
        BinOp::Shl => a << b,
        BinOp::Lshr if b >= width as u64 => 0,
        BinOp::Lshr => a >> b,
        _ => unreachable!("not an arithmetic operator"),
    };
    v & mask(width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: u8) -> Expr {
        Expr::var(Var::x(n))
    }

    #[test]
    fn arithmetic_wraps_at_width() {
        let env = Env::from_state(&ConcreteState::new().with_reg(Reg::x(1), u64::MAX));
        let e = Expr::add(x(1), Expr::c64(2));
        assert_eq!(eval(&e, &env).unwrap(), Value::bv64(1));
        let narrow = Expr::new(IrExpr::Binary(BinOp::Add, Expr::bv(255, 8), Expr::bv(1, 8)));
        assert_eq!(eval(&narrow, &env).unwrap(), Value::Bv { value: 0, width: 8 });
    }

    #[test]
    fn loads_are_little_endian_and_stores_overlay() {
        let mut s = ConcreteState::new().with_reg(Reg::x(1), 0x100);
        s.write(0x100, 8, 0x1122_3344_5566_7788);
        let env = Env::from_state(&s);
        let m = Expr::var(Var::M);
        assert_eq!(eval(&Expr::load(m.clone(), x(1), 8), &env).unwrap(), Value::bv64(0x1122_3344_5566_7788));
        assert_eq!(eval(&Expr::load(m.clone(), x(1), 1), &env).unwrap(), Value::Bv { value: 0x88, width: 8 });
        let st = Expr::store(m, x(1), Expr::c64(7), 8);
        let l = Expr::load(st, x(1), 8);
        assert_eq!(eval(&l, &env).unwrap(), Value::bv64(7));
    }

    #[test]
    fn hook_sees_accesses_and_can_fault() {
        let env = Env::from_state(&ConcreteState::new().with_reg(Reg::x(1), 0x40));
        let l = Expr::load(Expr::var(Var::M), x(1), 8);
        let mut seen = alloc::vec::Vec::new();
        let mut hook = |op, a, w| {
            seen.push((op, a, w));
            Ok(())
        };
        eval_with(&l, &env, Some(&mut hook)).unwrap();
        assert_eq!(seen, [(MemOp::Rd, 0x40, 8)]);
        let mut deny = |_, a, _| Err(ExecError::UnmappedAccess { addr: a, pc: 0 });
        assert!(matches!(eval_with(&l, &env, Some(&mut deny)), Err(EvalError::Access(_))));
    }

    #[test]
    fn partial_evaluation_is_kleene() {
        let known = |v: Var| if v == Var::x(1) { Some(Value::bv64(0)) } else { None };
        let unknown_eq = Expr::eq(x(2), Expr::c64(3));
        let false_eq = Expr::eq(x(1), Expr::c64(3));
        assert_eq!(eval_partial(&unknown_eq, &known), None);
        let conj = Expr::new(IrExpr::Binary(BinOp::LAnd, unknown_eq.clone(), false_eq.clone()));
        assert_eq!(eval_partial(&conj, &known), Some(Value::Bool(false)));
        let imp = Expr::new(IrExpr::Binary(BinOp::Implies, false_eq, unknown_eq));
        assert_eq!(eval_partial(&imp, &known), Some(Value::Bool(true)));
    }

    #[test]
    fn unbound_variable_is_reported() {
        let err = eval(&x(3), &Env::new()).unwrap_err();
        assert_eq!(err, EvalError::Unbound(Var::x(3)));
    }

    #[test]
    fn state_round_trips_through_env() {
        let mut s = ConcreteState::new().with_reg(Reg::x(30), 9);
        s.z = true;
        s.write(0x8000_0000, 8, 0xabcd);
        let env = Env::from_pair(&s, &ConcreteState::new());
        assert_eq!(env.to_state(false), s);
        assert_eq!(env.to_state(true), ConcreteState::new());
    }
}
