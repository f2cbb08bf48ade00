//! One experiment: draw a test case from the relation of a program, run
//! both inputs on the simulated cache and classify the outcome.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concrete::{ConcreteState, MemRegion};
use crate::ir::{Expr, IrProgram};
use crate::isa::{MalformedProgram, Program};
use crate::obs::ObsModel;
use crate::relation::{pair_query, term_constraints, EnumCursor, EnumStep, PathGuard, TermError, TermSpec};
use crate::solve::{Solver, SolverError, SolverResult};
use crate::symexec::{sym_exec, SymError, SymState};
use crate::testcase::{model_to_testcase, Provenance, TestCase};
use crate::transpile::transpile;
use crate::uarch::{run_on_uarch, CacheState, UarchConfig};

pub const DEFAULT_REPETITIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "class", content = "reason")]
pub enum Classification {
    Indistinguishable,
    Counterexample,
    Inconclusive,
    Failure(String),
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Indistinguishable => "indistinguishable",
            Classification::Counterexample => "counterexample",
            Classification::Inconclusive => "inconclusive",
            Classification::Failure(_) => "failure",
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn cache_digest(c: &CacheState) -> u64 {
    fnv64(c.dump().as_bytes())
}

pub fn config_digest(cfg: &UarchConfig) -> u64 {
    fnv64(format!("{cfg:?}").as_bytes())
}

pub fn program_digest(p: &Program) -> u64 {
    fnv64(format!("{p}").as_bytes())
}

/// Noise seed of repetition `rep` of input `input` (0 or 1).
pub fn repetition_seed(base: u64, input: u8, rep: usize) -> u64 {
    let mut bytes = [0u8; 17];
    bytes[..8].copy_from_slice(&base.to_le_bytes());
    bytes[8] = input;
    bytes[9..].copy_from_slice(&(rep as u64).to_le_bytes());
    fnv64(&bytes)
}

/// Everything a run of one experiment produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub classification: Classification,
    /// Final cache digests of each repetition, per input.
    pub digests: [Vec<u64>; 2],
    /// Sets told apart by the model's comparator.
    pub distinguishing_sets: Vec<u64>,
    /// Final cache of the first repetition of each input.
    pub finals: Option<[CacheState; 2]>,
}

/// Runs each input `reps` times. Disagreeing repetitions make the
/// experiment inconclusive; otherwise the model's comparator decides.
pub fn run_experiment(
    program: &Program,
    tc: &TestCase,
    model: &ObsModel,
    cfg: &UarchConfig,
    reps: usize,
    region: &MemRegion,
) -> Outcome {
    let mut digests = [Vec::new(), Vec::new()];
    let mut firsts: Vec<CacheState> = Vec::new();
    let mut stable = true;
    for (k, s) in [&tc.s1, &tc.s2].into_iter().enumerate() {
        let mut first: Option<CacheState> = None;
        for rep in 0..reps.max(1) {
            let mut c = *cfg;
            c.noise.seed = repetition_seed(cfg.noise.seed, k as u8, rep);
            let run = match run_on_uarch(program, s, &c, region) {
                Ok(r) => r,
                Err(e) => {
                    return Outcome {
                        classification: Classification::Failure(format!("input {}: {e}", k + 1)),
                        digests,
                        distinguishing_sets: Vec::new(),
                        finals: None,
                    }
                }
            };
            digests[k].push(cache_digest(&run.cache));
            match &first {
                None => first = Some(run.cache),
                Some(f) => stable &= *f == run.cache,
            }
        }
        firsts.push(first.unwrap());
    }
    let finals = [firsts[0].clone(), firsts[1].clone()];
    if !stable {
        return Outcome { classification: Classification::Inconclusive, digests, distinguishing_sets: Vec::new(), finals: Some(finals) };
    }
    let (classification, distinguishing_sets) = match model.compare_final(&finals[0], &finals[1]) {
        Ok(true) => (Classification::Indistinguishable, Vec::new()),
        Ok(false) => (Classification::Counterexample, model.distinguishing_sets(&finals[0], &finals[1])),
        Err(e) => (Classification::Failure(format!("{e}")), Vec::new()),
    };
    Outcome { classification, digests, distinguishing_sets, finals: Some(finals) }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Malformed(#[from] MalformedProgram),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// A program made ready for test generation: annotated IR, its paths and
/// the enumeration cursor.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub program: Program,
    pub ir: IrProgram,
    pub paths: Vec<SymState>,
    pub cursor: EnumCursor,
}

pub fn prepare(program: &Program, model: &ObsModel, term: Option<&TermSpec>, path_cap: usize) -> Result<Prepared, PrepareError> {
    program.validate()?;
    let ir = model.annotate(&transpile(program)?);
    let paths = sym_exec(&ir, path_cap)?;
    let cursor = EnumCursor::new(paths.len(), term.map(|t| t.range.clone()));
    Ok(Prepared { program: program.clone(), ir, paths, cursor })
}

/// What one cursor step yielded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Drawn {
    Test { tc: TestCase, query: Expr },
    /// No input for this step: unsat, unknown or a solver timeout.
    Skipped(String),
    /// The solver broke or its model does not replay.
    Failed(String),
}

/// Settings shared by every step of a campaign.
#[derive(Clone, Debug)]
pub struct DrawParams<'a> {
    pub model: &'a ObsModel,
    pub guard: Option<&'a PathGuard>,
    pub guard_name: Option<String>,
    pub term: Option<&'a TermSpec>,
    pub region: MemRegion,
    pub seed: u64,
}

/// The query of one enumeration step.
pub fn step_query(prep: &Prepared, step: &EnumStep, p: &DrawParams<'_>) -> Result<Expr, TermError> {
    let (i, j) = step.pair;
    let mut q = pair_query(&prep.paths, i, j, p.guard, &p.region).formula();
    if let (Some(term), Some(vals)) = (p.term, step.terms) {
        let t = term_constraints(term, &prep.paths, (i, j), vals, p.model.geometry, p.model.visible_from())?;
        q = Expr::land(q, t);
    }
    Ok(q)
}

/// Asks `solver` for one input pair of `step`.
pub fn draw(prep: &Prepared, step: &EnumStep, p: &DrawParams<'_>, solver: &mut dyn Solver) -> Drawn {
    let query = match step_query(prep, step, p) {
        Ok(q) => q,
        Err(e) => return Drawn::Failed(format!("{e}")),
    };
    let model = match solver.check(&query) {
        Ok(SolverResult::Sat(m)) => m,
        Ok(SolverResult::Unsat) => return Drawn::Skipped("unsat".into()),
        Ok(SolverResult::Unknown(why)) => return Drawn::Skipped(format!("unknown: {why}")),
        Err(e @ SolverError::Timeout(_)) => return Drawn::Skipped(format!("{e}")),
        Err(e) => return Drawn::Failed(format!("{e}")),
    };
    let provenance = Provenance {
        program_id: program_digest(&prep.program),
        pair: step.pair,
        guard: p.guard_name.clone(),
        terms: step.terms,
        seed: p.seed,
    };
    match model_to_testcase(&model, &prep.ir, &query, &p.region, provenance) {
        Ok(tc) => Drawn::Test { tc, query },
        Err(e) => Drawn::Failed(format!("{e}")),
    }
}

/// Convenience for callers holding two plain states.
pub fn testcase(s1: ConcreteState, s2: ConcreteState) -> TestCase {
    TestCase { s1, s2, provenance: Provenance::default() }
}
