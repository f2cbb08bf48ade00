use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Reg;

/// Program variables. `Discard` is the write-only sink for loads whose
/// result is thrown away (`ldr xzr, [..]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarName {
    X(u8),
    Z,
    N,
    M,
    Discard,
}

/// A variable of one of the two state copies; `primed` selects the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    pub name: VarName,
    pub primed: bool,
}

impl Var {
    pub const Z: Var = Var { name: VarName::Z, primed: false };
    pub const N: Var = Var { name: VarName::N, primed: false };
    pub const M: Var = Var { name: VarName::M, primed: false };
    pub const DISCARD: Var = Var { name: VarName::Discard, primed: false };

    pub fn x(n: u8) -> Var {
        Var { name: VarName::X(n), primed: false }
    }

    /// The variable holding a register, `None` for `xzr`.
    pub fn of_reg(r: Reg) -> Option<Var> {
        r.index().map(|n| Var::x(n as u8))
    }

    pub fn primed(self) -> Var {
        Var { primed: true, ..self }
    }

    pub fn unprimed(self) -> Var {
        Var { primed: false, ..self }
    }

    pub fn ty(self) -> Ty {
        match self.name {
            VarName::X(_) | VarName::Discard => Ty::Bv(64),
            VarName::Z | VarName::N => Ty::Bool,
            VarName::M => Ty::Mem,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name {
            VarName::X(n) => write!(f, "X{n}")?,
            VarName::Z => f.write_str("Z")?,
            VarName::N => f.write_str("N")?,
            VarName::M => f.write_str("M")?,
            VarName::Discard => f.write_str("_")?,
        }
        if self.primed {
            f.write_str("'")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Bool,
    Bv(u8),
    Mem,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("bool"),
            Ty::Bv(w) => write!(f, "bv{w}"),
            Ty::Mem => f.write_str("mem"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("`{op}` expects {expected}, found {found}")]
    Mismatch { op: &'static str, expected: String, found: String },
    #[error("bad width {0}")]
    Width(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Shl,
    Lshr,
    Eq,
    Ult,
    Ule,
    LAnd,
    LOr,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Shl => "<<",
            BinOp::Lshr => ">>",
            BinOp::Eq => "==",
            BinOp::Ult => "<u",
            BinOp::Ule => "<=u",
            BinOp::LAnd => "&&",
            BinOp::LOr => "||",
            BinOp::Implies => "==>",
        }
    }

    fn is_arith(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Shl | BinOp::Lshr
        )
    }
}

/// IR expression node. Bit-vector constants carry their width; loads
/// read `width` bytes little-endian and yield a `8·width`-bit value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IrExpr {
    Const { value: u64, width: u8 },
    Bool(bool),
    Var(Var),
    /// A memory whose every byte holds the given value.
    MemConst(u8),
    Unary(UnOp, Expr),
    Binary(BinOp, Expr, Expr),
    Ite(Expr, Expr, Expr),
    Load { mem: Expr, addr: Expr, width: u8 },
    Store { mem: Expr, addr: Expr, value: Expr, width: u8 },
}

/// Shared, immutable expression handle.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<IrExpr>);

impl Deref for Expr {
    type Target = IrExpr;

    fn deref(&self) -> &IrExpr {
        &self.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub fn mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn new(e: IrExpr) -> Expr {
        Expr(Arc::new(e))
    }

    /// Identity of the shared node, stable while the expression is alive.
    pub fn node_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn is_shared(&self) -> bool {
        Arc::strong_count(&self.0) > 1
    }

    pub fn bv(value: u64, width: u8) -> Expr {
        Expr::new(IrExpr::Const { value: value & mask(width), width })
    }

    pub fn c64(value: u64) -> Expr {
        Expr::bv(value, 64)
    }

    pub fn bool(b: bool) -> Expr {
        Expr::new(IrExpr::Bool(b))
    }

    pub fn tt() -> Expr {
        Expr::bool(true)
    }

    pub fn ff() -> Expr {
        Expr::bool(false)
    }

    pub fn var(v: Var) -> Expr {
        Expr::new(IrExpr::Var(v))
    }

    pub fn mem_const(byte: u8) -> Expr {
        Expr::new(IrExpr::MemConst(byte))
    }

    pub fn as_const(&self) -> Option<(u64, u8)> {
        match **self {
            IrExpr::Const { value, width } => Some((value, width)),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match **self {
            IrExpr::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_true(&self) -> bool {
        self.as_bool() == Some(true)
    }

    pub fn is_false(&self) -> bool {
        self.as_bool() == Some(false)
    }

    fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::new(IrExpr::Binary(op, a, b))
    }

    fn arith(op: BinOp, a: Expr, b: Expr) -> Expr {
        if let (Some((x, w)), Some((y, _))) = (a.as_const(), b.as_const()) {
            return Expr::bv(super::eval::arith(op, x, y, w), w);
        }
        let zero = |e: &Expr| e.as_const().is_some_and(|(v, _)| v == 0);
        let one = |e: &Expr| e.as_const().is_some_and(|(v, _)| v == 1);
        match op {
            BinOp::Add if zero(&b) => return a,
            BinOp::Add if zero(&a) => return b,
            BinOp::Sub | BinOp::Shl | BinOp::Lshr if zero(&b) => return a,
            BinOp::Mul if one(&b) => return a,
            BinOp::Mul if one(&a) => return b,
            _ => {}
        }
        Expr::binary(op, a, b)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Mul, a, b)
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::And, a, b)
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Or, a, b)
    }

    pub fn shl(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Shl, a, b)
    }

    pub fn lshr(a: Expr, b: Expr) -> Expr {
        Expr::arith(BinOp::Lshr, a, b)
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        if let (Some((x, _)), Some((y, _))) = (a.as_const(), b.as_const()) {
            return Expr::bool(x == y);
        }
        if let (Some(x), Some(y)) = (a.as_bool(), b.as_bool()) {
            return Expr::bool(x == y);
        }
        Expr::binary(BinOp::Eq, a, b)
    }

    pub fn ne(a: Expr, b: Expr) -> Expr {
        Expr::not(Expr::eq(a, b))
    }

    pub fn ult(a: Expr, b: Expr) -> Expr {
        if let (Some((x, _)), Some((y, _))) = (a.as_const(), b.as_const()) {
            return Expr::bool(x < y);
        }
        Expr::binary(BinOp::Ult, a, b)
    }

    pub fn ule(a: Expr, b: Expr) -> Expr {
        if let (Some((x, _)), Some((y, _))) = (a.as_const(), b.as_const()) {
            return Expr::bool(x <= y);
        }
        Expr::binary(BinOp::Ule, a, b)
    }

    pub fn not(a: Expr) -> Expr {
        match a.as_bool() {
            Some(b) => Expr::bool(!b),
            None => Expr::new(IrExpr::Unary(UnOp::Not, a)),
        }
    }

    pub fn land(a: Expr, b: Expr) -> Expr {
        match (a.as_bool(), b.as_bool()) {
            (Some(false), _) | (_, Some(false)) => Expr::ff(),
            (Some(true), _) => b,
            (_, Some(true)) => a,
            _ => Expr::binary(BinOp::LAnd, a, b),
        }
    }

    pub fn lor(a: Expr, b: Expr) -> Expr {
        match (a.as_bool(), b.as_bool()) {
            (Some(true), _) | (_, Some(true)) => Expr::tt(),
            (Some(false), _) => b,
            (_, Some(false)) => a,
            _ => Expr::binary(BinOp::LOr, a, b),
        }
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        match (a.as_bool(), b.as_bool()) {
            (Some(false), _) | (_, Some(true)) => Expr::tt(),
            (Some(true), _) => b,
            (_, Some(false)) => Expr::not(a),
            _ => Expr::binary(BinOp::Implies, a, b),
        }
    }

    pub fn ite(c: Expr, a: Expr, b: Expr) -> Expr {
        match c.as_bool() {
            Some(true) => a,
            Some(false) => b,
            None => Expr::new(IrExpr::Ite(c, a, b)),
        }
    }

    pub fn load(mem: Expr, addr: Expr, width: u8) -> Expr {
        Expr::new(IrExpr::Load { mem, addr, width })
    }

    pub fn store(mem: Expr, addr: Expr, value: Expr, width: u8) -> Expr {
        Expr::new(IrExpr::Store { mem, addr, value, width })
    }

    /// Conjunction of all items; `true` when empty.
    pub fn and_all<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        items.into_iter().fold(Expr::tt(), Expr::land)
    }

    pub fn or_all<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        items.into_iter().fold(Expr::ff(), Expr::lor)
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match &**self {
            IrExpr::Const { .. } | IrExpr::Bool(_) | IrExpr::Var(_) | IrExpr::MemConst(_) => Vec::new(),
            IrExpr::Unary(_, a) => alloc::vec![a],
            IrExpr::Binary(_, a, b) => alloc::vec![a, b],
            IrExpr::Ite(c, a, b) => alloc::vec![c, a, b],
            IrExpr::Load { mem, addr, .. } => alloc::vec![mem, addr],
            IrExpr::Store { mem, addr, value, .. } => alloc::vec![mem, addr, value],
        }
    }

    /// Rebuilds a node with new children, re-running simplification.
    pub fn with_children(&self, kids: &[Expr]) -> Expr {
        match &**self {
            IrExpr::Const { .. } | IrExpr::Bool(_) | IrExpr::Var(_) | IrExpr::MemConst(_) => self.clone(),
            IrExpr::Unary(UnOp::Not, _) => Expr::not(kids[0].clone()),
            IrExpr::Binary(op, _, _) => Expr::mk_binary(*op, kids[0].clone(), kids[1].clone()),
            IrExpr::Ite(..) => Expr::ite(kids[0].clone(), kids[1].clone(), kids[2].clone()),
            IrExpr::Load { width, .. } => Expr::load(kids[0].clone(), kids[1].clone(), *width),
            IrExpr::Store { width, .. } => {
                Expr::store(kids[0].clone(), kids[1].clone(), kids[2].clone(), *width)
            }
        }
    }

    pub fn mk_binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinOp::Add => Expr::add(a, b),
            BinOp::Sub => Expr::sub(a, b),
            BinOp::Mul => Expr::mul(a, b),
            BinOp::And => Expr::and(a, b),
            BinOp::Or => Expr::or(a, b),
            BinOp::Shl => Expr::shl(a, b),
            BinOp::Lshr => Expr::lshr(a, b),
            BinOp::Eq => Expr::eq(a, b),
            BinOp::Ult => Expr::ult(a, b),
            BinOp::Ule => Expr::ule(a, b),
            BinOp::LAnd => Expr::land(a, b),
            BinOp::LOr => Expr::lor(a, b),
            BinOp::Implies => Expr::implies(a, b),
        }
    }

    /// Bottom-up rewrite over the DAG; each shared node is rewritten once.
    pub fn rewrite<F>(&self, f: &mut F) -> Expr
    where
        F: FnMut(&Expr) -> Option<Expr>,
    {
        let mut memo = BTreeMap::new();
        self.rewrite_memo(f, &mut memo)
    }

    fn rewrite_memo<F>(&self, f: &mut F, memo: &mut BTreeMap<usize, Expr>) -> Expr
    where
        F: FnMut(&Expr) -> Option<Expr>,
    {
        if let Some(done) = memo.get(&self.node_id()) {
            return done.clone();
        }
        let out = match f(self) {
            Some(replaced) => replaced,
            None => {
                let kids = self.children();
                if kids.is_empty() {
                    self.clone()
                } else {
                    let new: Vec<Expr> = kids.iter().map(|k| k.rewrite_memo(f, memo)).collect();
                    if new.iter().zip(kids.iter()).all(|(n, o)| n.node_id() == o.node_id()) {
                        self.clone()
                    } else {
                        self.with_children(&new)
                    }
                }
            }
        };
        memo.insert(self.node_id(), out.clone());
        out
    }

    /// Replaces variables according to `f`.
    pub fn substitute<F>(&self, mut f: F) -> Expr
    where
        F: FnMut(Var) -> Option<Expr>,
    {
        self.rewrite(&mut |e: &Expr| match **e {
            IrExpr::Var(v) => f(v),
            _ => None,
        })
    }

    /// The same expression over the second state copy.
    pub fn prime(&self) -> Expr {
        self.substitute(|v| if v.primed { None } else { Some(Expr::var(v.primed())) })
    }

    /// Visits every distinct node once, children before parents.
    pub fn visit_dag<F: FnMut(&Expr)>(&self, f: &mut F) {
        let mut seen = alloc::collections::BTreeSet::new();
        self.visit_inner(f, &mut seen);
    }

    fn visit_inner<F: FnMut(&Expr)>(&self, f: &mut F, seen: &mut alloc::collections::BTreeSet<usize>) {
        if !seen.insert(self.node_id()) {
            return;
        }
        for k in self.children() {
            k.visit_inner(f, seen);
        }
        f(self);
    }

    /// Free variables, sorted.
    pub fn vars(&self) -> alloc::collections::BTreeSet<Var> {
        let mut out = alloc::collections::BTreeSet::new();
        self.visit_dag(&mut |e| {
            if let IrExpr::Var(v) = **e {
                out.insert(v);
            }
        });
        out
    }

    /// Number of distinct nodes.
    pub fn dag_size(&self) -> usize {
        let mut n = 0;
        self.visit_dag(&mut |_| n += 1);
        n
    }

    /// Type of the expression, checking operand types on the way.
    pub fn ty(&self) -> Result<Ty, TypeError> {
        let mut memo: BTreeMap<usize, Ty> = BTreeMap::new();
        let mut err = None;
        self.visit_dag(&mut |e| {
            if err.is_some() {
                return;
            }
            let get = |k: &Expr, memo: &BTreeMap<usize, Ty>| memo[&k.node_id()];
            let r = node_ty(e, |k| get(k, &memo));
            match r {
                Ok(t) => {
                    memo.insert(e.node_id(), t);
                }
                Err(x) => err = Some(x),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(memo[&self.node_id()]),
        }
    }
}

fn mismatch(op: &'static str, expected: &str, found: Ty) -> TypeError {
    TypeError::Mismatch { op, expected: expected.into(), found: alloc::format!("{found}") }
}

fn node_ty(e: &Expr, ty_of: impl Fn(&Expr) -> Ty) -> Result<Ty, TypeError> {
    Ok(match &**e {
        IrExpr::Const { width, .. } => {
            if *width == 0 || *width > 64 {
                return Err(TypeError::Width(*width));
            }
            Ty::Bv(*width)
        }
        IrExpr::Bool(_) => Ty::Bool,
        IrExpr::Var(v) => v.ty(),
        IrExpr::MemConst(_) => Ty::Mem,
        IrExpr::Unary(UnOp::Not, a) => {
            let t = ty_of(a);
            if t != Ty::Bool {
                return Err(mismatch("!", "bool", t));
            }
            Ty::Bool
        }
        IrExpr::Binary(op, a, b) => {
            let (ta, tb) = (ty_of(a), ty_of(b));
            if op.is_arith() || matches!(op, BinOp::Ult | BinOp::Ule) {
                match (ta, tb) {
                    (Ty::Bv(x), Ty::Bv(y)) if x == y => {}
                    _ => return Err(mismatch(op.symbol(), "two bit-vectors of equal width", if matches!(ta, Ty::Bv(_)) { tb } else { ta })),
                }
                if op.is_arith() {
                    ta
                } else {
                    Ty::Bool
                }
            } else if *op == BinOp::Eq {
                if ta != tb {
                    return Err(mismatch("==", "operands of equal type", tb));
                }
                Ty::Bool
            } else {
                if ta != Ty::Bool {
                    return Err(mismatch(op.symbol(), "bool", ta));
                }
                if tb != Ty::Bool {
                    return Err(mismatch(op.symbol(), "bool", tb));
                }
                Ty::Bool
            }
        }
        IrExpr::Ite(c, a, b) => {
            let tc = ty_of(c);
            if tc != Ty::Bool {
                return Err(mismatch("ite", "bool condition", tc));
            }
            let (ta, tb) = (ty_of(a), ty_of(b));
            if ta != tb {
                return Err(mismatch("ite", "branches of equal type", tb));
            }
            ta
        }
        IrExpr::Load { mem, addr, width } => {
            check_mem_access("LOAD", ty_of(mem), ty_of(addr), *width)?;
            Ty::Bv(width * 8)
        }
        IrExpr::Store { mem, addr, value, width } => {
            check_mem_access("STORE", ty_of(mem), ty_of(addr), *width)?;
            let tv = ty_of(value);
            if tv != Ty::Bv(width * 8) {
                return Err(mismatch("STORE", "value of the access width", tv));
            }
            Ty::Mem
        }
    })
}

fn check_mem_access(op: &'static str, tm: Ty, ta: Ty, width: u8) -> Result<(), TypeError> {
    if !matches!(width, 1 | 2 | 4 | 8) {
        return Err(TypeError::Width(width));
    }
    if tm != Ty::Mem {
        return Err(mismatch(op, "memory", tm));
    }
    if ta != Ty::Bv(64) {
        return Err(mismatch(op, "64-bit address", ta));
    }
    Ok(())
}

fn write_const(f: &mut fmt::Formatter<'_>, value: u64, width: u8) -> fmt::Result {
    if width == 64 {
        if value < 0x1000 {
            write!(f, "{value}")
        } else {
            write!(f, "0x{value:x}")
        }
    } else {
        write!(f, "{value}:{width}")
    }
}

/// Writes one node, delegating children to `child`.
fn write_node(
    e: &Expr,
    f: &mut fmt::Formatter<'_>,
    child: &mut dyn FnMut(&Expr, &mut fmt::Formatter<'_>) -> fmt::Result,
) -> fmt::Result {
    match &**e {
        IrExpr::Const { value, width } => write_const(f, *value, *width),
        IrExpr::Bool(b) => write!(f, "{b}"),
        IrExpr::Var(v) => write!(f, "{v}"),
        IrExpr::MemConst(b) => write!(f, "MEM({b})"),
        IrExpr::Unary(UnOp::Not, a) => {
            f.write_str("!")?;
            child(a, f)
        }
        IrExpr::Binary(op, a, b) => {
            f.write_str("(")?;
            child(a, f)?;
            write!(f, " {} ", op.symbol())?;
            child(b, f)?;
            f.write_str(")")
        }
        IrExpr::Ite(c, a, b) => {
            f.write_str("ite(")?;
            child(c, f)?;
            f.write_str(", ")?;
            child(a, f)?;
            f.write_str(", ")?;
            child(b, f)?;
            f.write_str(")")
        }
        IrExpr::Load { mem, addr, width } => {
            f.write_str("LOAD(")?;
            child(mem, f)?;
            f.write_str(", ")?;
            child(addr, f)?;
            write!(f, ", {width})")
        }
        IrExpr::Store { mem, addr, value, width } => {
            f.write_str("STORE(")?;
            child(mem, f)?;
            f.write_str(", ")?;
            child(addr, f)?;
            f.write_str(", ")?;
            child(value, f)?;
            write!(f, ", {width})")
        }
    }
}

fn write_tree(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write_node(e, f, &mut |k, f| write_tree(k, f))
}

impl fmt::Display for Expr {
    /// Tree form; shared sub-expressions are printed at every use.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tree(self, f)
    }
}

/// Display adapter printing shared compound nodes once through
/// `let tN = .. in` bindings.
pub struct Shared<'a>(pub &'a Expr);

impl Expr {
    pub fn display_shared(&self) -> Shared<'_> {
        Shared(self)
    }
}

impl fmt::Display for Shared<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // count references to each compound node inside the DAG
        let mut uses: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order: Vec<Expr> = Vec::new();
        self.0.visit_dag(&mut |e| {
            for k in e.children() {
                *uses.entry(k.node_id()).or_default() += 1;
            }
            order.push(e.clone());
        });
        let mut names: BTreeMap<usize, usize> = BTreeMap::new();
        let root = self.0.node_id();
        for e in &order {
            let compound = !e.children().is_empty();
            if compound && e.node_id() != root && uses.get(&e.node_id()).copied().unwrap_or(0) > 1 {
                let n = names.len();
                names.insert(e.node_id(), n);
            }
        }
        fn write_named(
            e: &Expr,
            f: &mut fmt::Formatter<'_>,
            names: &BTreeMap<usize, usize>,
            top: bool,
        ) -> fmt::Result {
            if !top {
                if let Some(n) = names.get(&e.node_id()) {
                    return write!(f, "t{n}");
                }
            }
            write_node(e, f, &mut |k, f| write_named(k, f, names, false))
        }
        for e in &order {
            if let Some(n) = names.get(&e.node_id()) {
                write!(f, "let t{n} = ")?;
                write_named(e, f, &names, true)?;
                f.write_str(" in ")?;
            }
        }
        write_named(self.0, f, &names, true)
    }
}
