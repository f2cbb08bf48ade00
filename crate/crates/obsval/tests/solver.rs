#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use obsval_core::brute::BruteSolver;
use obsval_core::ir::{eval_bool, parse_expr, Expr, MemValue, ParseCtx, Ty, Value, Var};
use obsval_core::obs::ObsModel;
use obsval_core::relation::pair_query;
use obsval_core::solve::{Solver, SolverResult};
use obsval_core::symexec::{sym_exec, DEFAULT_PATH_CAP};
use obsval_core::transpile::transpile;

use common::*;

const REG_VALUES: [u64; 4] = [0x100, 0x108, 0x120, 0x130];

fn image_expr() -> Expr {
    let (_, region) = reduced();
    let mut m = Expr::mem_const(0);
    let mut bytes = pointer_image(&region).into_iter().collect::<Vec<_>>();
    bytes.sort();
    for (a, b) in bytes {
        if b != 0 {
            m = Expr::store(m, Expr::c64(a), Expr::bv(b as u64, 8), 1);
        }
    }
    m
}

/// `f` with both memories fixed and every register drawn from `REG_VALUES`.
fn restricted(f: &Expr, m1: &Expr, m2: &Expr) -> Expr {
    let f = f.substitute(|v| match (v.ty(), v.primed) {
        (Ty::Mem, false) => Some(m1.clone()),
        (Ty::Mem, true) => Some(m2.clone()),
        _ => None,
    });
    let doms = f
        .vars()
        .into_iter()
        .filter(|v| v.ty() == Ty::Bv(64))
        .map(|v| Expr::or_all(REG_VALUES.iter().map(|&c| Expr::eq(Expr::var(v), Expr::c64(c)))));
    Expr::land(f.clone(), Expr::and_all(doms))
}

fn brute() -> BruteSolver {
    BruteSolver::new(REG_VALUES.to_vec(), vec![MemValue::default()]).complete(true)
}

#[test]
fn brute_and_external_agree_on_reduced_queries() {
    let (g, region) = reduced();
    let mut z3 = support::external();
    let mems = [Expr::mem_const(0), image_expr()];
    let mut sat = 0;
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 200 {
        let p = small_program(seed, 3);
        let model = ObsModel::parse(["mwc", "pmwc:2", "dc", "mwc-pc"][(seed % 4) as usize], g).unwrap();
        let paths = sym_exec(&model.annotate(&transpile(&p).unwrap()), DEFAULT_PATH_CAP).unwrap();
        let (i, j) = ((seed as usize) % paths.len(), (seed as usize / 3) % paths.len());
        let q = pair_query(&paths, i, j, None, &region).formula();
        let f = restricted(&q, &mems[(seed & 1) as usize], &mems[(seed >> 1 & 1) as usize]);
        seed += 1;
        let a = brute().check(&f).unwrap();
        let b = z3.check(&f).unwrap();
        assert_eq!(a.is_sat(), b.is_sat(), "{p}\n{}", f.display_shared());
        assert!(!matches!(b, SolverResult::Unknown(_)));
        for r in [a, b] {
            if let SolverResult::Sat(m) = r {
                assert!(eval_bool(&f, &m.to_env()).unwrap(), "{p}");
            }
        }
        if z3.check(&f).unwrap().is_sat() {
            sat += 1;
        }
        checked += 1;
    }
    // both verdicts must show up
    assert!(sat > 20 && sat < 200, "{sat}");
}

#[test]
fn contradictory_indices_are_unsat() {
    let (g, _) = reduced();
    let ctx = ParseCtx::with_geometry(g);
    let f = parse_expr("index(X1) == 3 && index(X1) == 5", &ctx).unwrap();
    assert_eq!(support::external().check(&f).unwrap(), SolverResult::Unsat);
    assert_eq!(brute().check(&f).unwrap(), SolverResult::Unsat);
}

#[test]
fn models_cover_memory_and_flags() {
    let ctx = ParseCtx::default();
    let f = parse_expr("LOAD(M, X1, 8) == 0x1234 && X1 == 0x80000010 && Z' && !Z", &ctx).unwrap();
    let r = support::external().check(&f).unwrap();
    let SolverResult::Sat(m) = r else { panic!("{r:?}") };
    assert_eq!(m.get(Var::x(1)), Some(&Value::bv64(0x8000_0010)));
    assert!(eval_bool(&f, &m.to_env()).unwrap());
}

#[test]
fn timeouts_are_reported() {
    let mut s = obsval::solver::ExternalSolver::new("sleep 5", std::time::Duration::from_millis(100)).unwrap();
    let e = s.check(&Expr::tt()).unwrap_err();
    assert!(matches!(e, obsval_core::solve::SolverError::Timeout(_)), "{e:?}");
}

#[test]
fn missing_binaries_crash() {
    let mut s = obsval::solver::ExternalSolver::new("/nonexistent/solver", std::time::Duration::from_secs(1)).unwrap();
    assert!(matches!(s.check(&Expr::tt()), Err(obsval_core::solve::SolverError::Crash(_))));
}
