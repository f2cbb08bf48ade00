//! Weakest observational-equivalence relation over two state copies, and
//! the per-path-pair queries used to draw test inputs from it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::concrete::MemRegion;
use crate::geometry::CacheGeometry;
use crate::ir::{parse_expr, Expr, ParseCtx, ParseError};
use crate::symexec::{SymObs, SymState};

/// A relation together with the side constraints keeping both copies'
/// memory accesses inside the experiment region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelFormula {
    pub relation: Expr,
    pub side: Expr,
}

impl RelFormula {
    pub fn formula(&self) -> Expr {
        Expr::land(self.relation.clone(), self.side.clone())
    }
}

impl fmt::Display for RelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.formula().display_shared())
    }
}

/// Symbolic equality of two observation lists after dropping the entries
/// whose condition is false. `l2` is expected over the primed copy.
pub fn obs_list_eq(l1: &[SymObs], l2: &[SymObs]) -> Expr {
    let mut memo = BTreeMap::new();
    obs_eq_from(l1, l2, 0, 0, &mut memo)
}

fn obs_eq_from(l1: &[SymObs], l2: &[SymObs], i: usize, j: usize, memo: &mut BTreeMap<(usize, usize), Expr>) -> Expr {
    if let Some(e) = memo.get(&(i, j)) {
        return e.clone();
    }
    let out = match (l1.get(i), l2.get(j)) {
        (None, None) => Expr::tt(),
        (Some(a), None) => Expr::land(Expr::not(a.cond.clone()), obs_eq_from(l1, l2, i + 1, j, memo)),
        (None, Some(b)) => Expr::land(Expr::not(b.cond.clone()), obs_eq_from(l1, l2, i, j + 1, memo)),
        (Some(a), Some(b)) => {
            let heads = if a.exprs.len() == b.exprs.len() {
                Expr::and_all(a.exprs.iter().zip(&b.exprs).map(|(x, y)| Expr::eq(x.clone(), y.clone())))
            } else {
                Expr::ff()
            };
            let both = Expr::implies(
                Expr::land(a.cond.clone(), b.cond.clone()),
                Expr::land(heads, obs_eq_from(l1, l2, i + 1, j + 1, memo)),
            );
            let skip_a = Expr::implies(Expr::not(a.cond.clone()), obs_eq_from(l1, l2, i + 1, j, memo));
            let skip_b = Expr::implies(
                Expr::land(a.cond.clone(), Expr::not(b.cond.clone())),
                obs_eq_from(l1, l2, i, j + 1, memo),
            );
            Expr::and_all([both, skip_a, skip_b])
        }
    };
    memo.insert((i, j), out.clone());
    out
}

/// Every access of `sigma` is in-region and aligned, assuming its path is taken.
pub fn well_defined(sigma: &SymState, region: &MemRegion) -> Expr {
    let conds = sigma.accesses.iter().map(|a| access_ok(&a.addr, a.width, region));
    Expr::implies(sigma.path.clone(), Expr::and_all(conds))
}

fn access_ok(addr: &Expr, width: u8, region: &MemRegion) -> Expr {
    let w = width as u64;
    let last = region.end().wrapping_sub(w);
    let in_range = Expr::land(
        Expr::ule(Expr::c64(region.base), addr.clone()),
        Expr::ule(addr.clone(), Expr::c64(last)),
    );
    let aligned = Expr::eq(Expr::and(addr.clone(), Expr::c64(w - 1)), Expr::c64(0));
    Expr::land(in_range, aligned)
}

fn well_defined_all(paths: &[SymState], region: &MemRegion) -> Expr {
    let wd = Expr::and_all(paths.iter().map(|p| well_defined(p, region)));
    Expr::land(wd.clone(), wd.prime())
}

fn pair_conjunct(a: &SymState, b: &SymState) -> Expr {
    let primed: Vec<SymObs> = b.obs.iter().map(SymObs::prime).collect();
    Expr::implies(Expr::land(a.path.clone(), b.path.prime()), obs_list_eq(&a.obs, &primed))
}

/// The relation over path pairs `(i, j)` with `j >= i`.
///
/// Dropping the pairs with `j < i` halves the formula but makes it
/// asymmetric: a pair of inputs where the first copy takes a later path
/// than the second is accepted unconstrained. Conjoining the formula with
/// its copy-swapped image gives back `synth_relation_full`.
pub fn synth_relation(paths: &[SymState], region: &MemRegion) -> RelFormula {
    let mut conj = Vec::new();
    for i in 0..paths.len() {
        for j in i..paths.len() {
            conj.push(pair_conjunct(&paths[i], &paths[j]));
        }
    }
    RelFormula { relation: Expr::and_all(conj), side: well_defined_all(paths, region) }
}

/// The relation over all path pairs.
pub fn synth_relation_full(paths: &[SymState], region: &MemRegion) -> RelFormula {
    let mut conj = Vec::new();
    for a in paths {
        for b in paths {
            conj.push(pair_conjunct(a, b));
        }
    }
    RelFormula { relation: Expr::and_all(conj), side: well_defined_all(paths, region) }
}

/// Swaps the two state copies of an expression.
pub fn swap_copies(e: &Expr) -> Expr {
    e.substitute(|v| Some(Expr::var(if v.primed { v.unprimed() } else { v.primed() })))
}

/// Restriction on the inputs of one copy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathGuard {
    /// Only inputs whose run makes no observation.
    NoObservations,
    /// A predicate over the unprimed symbols.
    Predicate(Expr),
}

impl PathGuard {
    /// The guard over the unprimed copy.
    pub fn formula(&self, paths: &[SymState]) -> Expr {
        match self {
            PathGuard::NoObservations => Expr::and_all(paths.iter().map(|p| {
                let silent = Expr::and_all(p.obs.iter().map(|o| Expr::not(o.cond.clone())));
                Expr::implies(p.path.clone(), silent)
            })),
            PathGuard::Predicate(e) => e.clone(),
        }
    }
}

/// Fragment for one path pair: both path conditions, equal observations,
/// the guard on both copies, and well-definedness of both runs.
pub fn pair_query(
    paths: &[SymState],
    i: usize,
    j: usize,
    guard: Option<&PathGuard>,
    region: &MemRegion,
) -> RelFormula {
    let (a, b) = (&paths[i], &paths[j]);
    let primed: Vec<SymObs> = b.obs.iter().map(SymObs::prime).collect();
    let mut rel = Expr::and_all([a.path.clone(), b.path.prime(), obs_list_eq(&a.obs, &primed)]);
    if let Some(g) = guard {
        let g = g.formula(paths);
        rel = Expr::and_all([rel, g.clone(), g.prime()]);
    }
    let side = Expr::land(well_defined(a, region), well_defined(b, region).prime());
    RelFormula { relation: rel, side }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("value {0} outside the enumeration range")]
    RangeViolation(u64),
    #[error("term: {0}")]
    Parse(#[from] ParseError),
}

/// A user expression whose value pair is enumerated over `R × R`. The text
/// may use `addr(k)`, the address of the k-th access on a path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermSpec {
    pub text: String,
    pub range: Vec<u64>,
}

impl TermSpec {
    /// The term on one path, or `None` when the path lacks an access the
    /// term refers to.
    pub fn on_path(&self, sigma: &SymState, geometry: CacheGeometry, visible_from: Option<u64>) -> Result<Option<Expr>, TermError> {
        let ctx = ParseCtx { geometry: Some(geometry), visible_from, addrs: sigma.addrs() };
        match parse_expr(&self.text, &ctx) {
            Ok(e) => Ok(Some(e)),
            Err(ParseError::AddrIndex { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// `e_i(s1) = v1 ∧ e_j(s2) = v2` for the path pair `(i, j)`.
pub fn term_constraints(
    term: &TermSpec,
    paths: &[SymState],
    (i, j): (usize, usize),
    (v1, v2): (u64, u64),
    geometry: CacheGeometry,
    visible_from: Option<u64>,
) -> Result<Expr, TermError> {
    for v in [v1, v2] {
        if !term.range.contains(&v) {
            return Err(TermError::RangeViolation(v));
        }
    }
    let e1 = term.on_path(&paths[i], geometry, visible_from)?;
    let e2 = term.on_path(&paths[j], geometry, visible_from)?;
    Ok(match (e1, e2) {
        (Some(e1), Some(e2)) => Expr::land(Expr::eq(e1, Expr::c64(v1)), Expr::eq(e2.prime(), Expr::c64(v2))),
        _ => Expr::ff(),
    })
}

/// One enumeration step: a path pair and, with a term, a value pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumStep {
    pub index: u64,
    pub pair: (usize, usize),
    pub terms: Option<(u64, u64)>,
}

/// Round-robin enumerator. Step `k` takes path pair `k mod P` in
/// lexicographic `(i, j)`, `j >= i` order and value pair `(k / P) mod |R|²`
/// in lexicographic order over `R × R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumCursor {
    pairs: Vec<(usize, usize)>,
    range: Option<Vec<u64>>,
    next: u64,
}

impl EnumCursor {
    pub fn new(n_paths: usize, range: Option<Vec<u64>>) -> Self {
        let mut pairs = Vec::new();
        for i in 0..n_paths {
            for j in i..n_paths {
                pairs.push((i, j));
            }
        }
        EnumCursor { pairs, range, next: 0 }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Steps until every combination has been produced once.
    pub fn period(&self) -> u64 {
        let t = self.range.as_ref().map_or(1, |r| (r.len() * r.len()) as u64);
        self.pairs.len() as u64 * t
    }

    pub fn position(&self) -> u64 {
        self.next
    }

    pub fn seek(&mut self, k: u64) {
        self.next = k;
    }

    pub fn step_at(&self, k: u64) -> Option<EnumStep> {
        let p = self.pairs.len() as u64;
        if p == 0 {
            return None;
        }
        let pair = self.pairs[(k % p) as usize];
        let terms = match &self.range {
            Some(r) if !r.is_empty() => {
                let n = r.len() as u64;
                let t = (k / p) % (n * n);
                Some((r[(t / n) as usize], r[(t % n) as usize]))
            }
            _ => None,
        };
        Some(EnumStep { index: k, pair, terms })
    }
}

impl Iterator for EnumCursor {
    type Item = EnumStep;

    fn next(&mut self) -> Option<EnumStep> {
        let s = self.step_at(self.next)?;
        self.next += 1;
        Some(s)
    }
}
