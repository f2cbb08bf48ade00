#![allow(dead_code)]

use std::time::Duration;

use obsval::solver::ExternalSolver;

/// The solver named by the environment, or `z3` from the path.
pub fn external() -> ExternalSolver {
    let t = Duration::from_secs(60);
    match ExternalSolver::from_env(t) {
        Some(s) => s.expect("solver command"),
        None => ExternalSolver::new("z3", t).unwrap(),
    }
}
