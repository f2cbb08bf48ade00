//! Campaign driver: programs, test generation, simulation, classification.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use obsval_core::experiment::{
    config_digest, draw, fnv64, prepare, program_digest, run_experiment, Classification, DrawParams, Drawn, Outcome,
};
use obsval_core::isa::Program;
use obsval_core::obs::ObsModel;
use obsval_core::solve::Solver;
use obsval_core::testcase::TestCase;

use crate::config::{CampaignConfig, ConfigError, Resolved};
use crate::db::{Db, DbError, Entry, ExperimentRecord, SkipRecord};
use crate::solver::make_solver;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Seed of the `k`-th program of a campaign.
pub fn program_seed(campaign_seed: u64, k: usize) -> u64 {
    let mut b = [0u8; 16];
    b[..8].copy_from_slice(&campaign_seed.to_le_bytes());
    b[8..].copy_from_slice(&(k as u64).to_le_bytes());
    fnv64(&b)
}

/// Counts per classification, in the shape of the summary table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub experiments: usize,
    pub indistinguishable: usize,
    pub counterexamples: usize,
    pub inconclusive: usize,
    pub failures: usize,
    pub skipped: usize,
}

impl Summary {
    pub fn add(&mut self, c: &Classification) {
        self.experiments += 1;
        match c {
            Classification::Indistinguishable => self.indistinguishable += 1,
            Classification::Counterexample => self.counterexamples += 1,
            Classification::Inconclusive => self.inconclusive += 1,
            Classification::Failure(_) => self.failures += 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("solver: {0}")]
    Solver(String),
}

/// Runs a stored or freshly drawn experiment and builds its record.
#[allow(clippy::too_many_arguments)]
pub fn record_for(
    cfg: &CampaignConfig,
    model: &ObsModel,
    program: &Program,
    tc: TestCase,
    relation: String,
    region: obsval_core::concrete::MemRegion,
    id: u64,
    seed: u64,
) -> (ExperimentRecord, Outcome) {
    let started_ms = now_ms();
    let out = run_experiment(program, &tc, model, &cfg.uarch, cfg.repetitions, &region);
    let rec = ExperimentRecord {
        id,
        campaign: cfg.name.clone(),
        generator: cfg.generator.name().into(),
        program: program.to_string(),
        program_id: program_digest(program),
        model: model.kind.to_string(),
        syntactic_obs: model.syntactic_obs,
        region,
        uarch: cfg.uarch,
        uarch_digest: config_digest(&cfg.uarch),
        testcase: tc,
        relation,
        repetitions: cfg.repetitions,
        runs: out.digests.clone(),
        classification: out.classification.clone(),
        distinguishing_sets: out.distinguishing_sets.clone(),
        seed,
        started_ms,
        finished_ms: now_ms(),
    };
    (rec, out)
}

/// A pipeline failure before any run: no test case exists.
fn failure_record(
    cfg: &CampaignConfig,
    model: &ObsModel,
    program: &Program,
    region: obsval_core::concrete::MemRegion,
    id: u64,
    seed: u64,
    reason: String,
) -> ExperimentRecord {
    let t = now_ms();
    ExperimentRecord {
        id,
        campaign: cfg.name.clone(),
        generator: cfg.generator.name().into(),
        program: program.to_string(),
        program_id: program_digest(program),
        model: model.kind.to_string(),
        syntactic_obs: model.syntactic_obs,
        region,
        uarch: cfg.uarch,
        uarch_digest: config_digest(&cfg.uarch),
        testcase: obsval_core::experiment::testcase(Default::default(), Default::default()),
        relation: "true".into(),
        repetitions: cfg.repetitions,
        runs: [Vec::new(), Vec::new()],
        classification: Classification::Failure(reason),
        distinguishing_sets: Vec::new(),
        seed,
        started_ms: t,
        finished_ms: t,
    }
}

enum Msg {
    Done(ExperimentRecord),
    Skip(SkipRecord),
}

/// Runs the campaign, appending every experiment and skipped step to `db`.
pub fn run_campaign(cfg: &CampaignConfig, db: &mut Db) -> Result<Summary, HarnessError> {
    let resolved = cfg.resolve()?;
    let brute = cfg.brute_solver();
    let factory = || make_solver(cfg.solver, cfg.solver_timeout(), cfg.keep_queries.clone(), &brute);
    // fail early when the backend cannot be built at all
    factory().map_err(|e| HarnessError::Solver(e.to_string()))?;
    run_campaign_with(cfg, &resolved, db, &|| factory().map_err(|e| e.to_string()))
}

/// As [`run_campaign`] with a caller-supplied solver per worker.
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    resolved: &Resolved,
    db: &mut Db,
    new_solver: &(dyn Fn() -> Result<Box<dyn Solver + Send>, String> + Sync),
) -> Result<Summary, HarnessError> {
    let first_id = db.last_id()?.map_or(0, |i| i + 1);
    let next_program = AtomicUsize::new(0);
    let classified = AtomicUsize::new(0);
    let next_id = AtomicUsize::new(0);
    let cap = cfg.max_experiments.unwrap_or(usize::MAX);
    let (tx, rx) = mpsc::channel::<Msg>();
    let mut summary = Summary::default();
    let mut io_error = None;
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers {
            let tx = tx.clone();
            let (next_program, classified, next_id) = (&next_program, &classified, &next_id);
            scope.spawn(move || {
                let mut solver = match new_solver() {
                    Ok(s) => s,
                    Err(e) => {
                        log::error!("worker without solver: {e}");
                        return;
                    }
                };
                loop {
                    let k = next_program.fetch_add(1, Ordering::SeqCst);
                    if k >= cfg.programs || classified.load(Ordering::SeqCst) >= cap {
                        break;
                    }
                    let seed = program_seed(cfg.seed, k);
                    let program = cfg.generator.generate(seed);
                    if !worker_program(cfg, resolved, &program, seed, solver.as_mut(), &tx, classified, next_id, first_id, cap) {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for msg in rx {
            let entry = match msg {
                Msg::Done(r) => {
                    summary.add(&r.classification);
                    Entry::Experiment(r)
                }
                Msg::Skip(s) => {
                    summary.skipped += 1;
                    Entry::Skipped(s)
                }
            };
            if io_error.is_none() {
                if let Err(e) = db.append(&entry) {
                    io_error = Some(e);
                    // stop handing out work
                    next_program.store(usize::MAX / 2, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e.into());
    }
    Ok(summary)
}

/// Draws and runs the experiments of one program. Returns false when the
/// campaign has enough experiments.
#[allow(clippy::too_many_arguments)]
fn worker_program(
    cfg: &CampaignConfig,
    resolved: &Resolved,
    program: &Program,
    seed: u64,
    solver: &mut dyn Solver,
    tx: &mpsc::Sender<Msg>,
    classified: &AtomicUsize,
    next_id: &AtomicUsize,
    first_id: u64,
    cap: usize,
) -> bool {
    let skip = |step: u64, pair, terms, reason: String| {
        let _ = tx.send(Msg::Skip(SkipRecord {
            campaign: cfg.name.clone(),
            program: program.to_string(),
            program_id: program_digest(program),
            step,
            pair,
            terms,
            reason,
            at_ms: now_ms(),
        }));
    };
    let prep = match prepare(program, &resolved.model, resolved.term.as_ref(), cfg.path_cap) {
        Ok(p) => p,
        Err(e) => {
            skip(0, (0, 0), None, format!("cannot analyse program: {e}"));
            return true;
        }
    };
    let params = DrawParams {
        model: &resolved.model,
        guard: resolved.guard.as_ref(),
        guard_name: cfg.relation.guard.clone(),
        term: resolved.term.as_ref(),
        region: resolved.region,
        seed,
    };
    for k in 0..cfg.experiments_per_program as u64 {
        if classified.load(Ordering::SeqCst) >= cap {
            return false;
        }
        let step = match prep.cursor.step_at(k) {
            Some(s) => s,
            None => break,
        };
        match draw(&prep, &step, &params, solver) {
            Drawn::Test { tc, query } => {
                if classified.fetch_add(1, Ordering::SeqCst) >= cap {
                    return false;
                }
                let id = first_id + next_id.fetch_add(1, Ordering::SeqCst) as u64;
                let relation = query.display_shared().to_string();
                let (rec, _) = record_for(cfg, &resolved.model, program, tc, relation, resolved.region, id, seed);
                log::debug!("experiment {id}: {}", rec.classification.label());
                let _ = tx.send(Msg::Done(rec));
            }
            Drawn::Skipped(reason) => skip(k, step.pair, step.terms, reason),
            Drawn::Failed(reason) => {
                log::warn!("step {k} of program {seed:016x}: {reason}");
                if classified.fetch_add(1, Ordering::SeqCst) >= cap {
                    return false;
                }
                let id = first_id + next_id.fetch_add(1, Ordering::SeqCst) as u64;
                let _ = tx.send(Msg::Done(failure_record(cfg, &resolved.model, program, resolved.region, id, seed, reason)));
            }
        }
    }
    true
}

/// Outcome of replaying a stored record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub id: u64,
    pub stored: Classification,
    pub replayed: Classification,
    pub witness: Result<bool, String>,
}

impl Replay {
    pub fn agrees(&self) -> bool {
        self.stored == self.replayed
    }
}

/// Re-runs a record from its own contents.
pub fn replay(rec: &ExperimentRecord) -> Result<Replay, String> {
    let program = Program::parse(&rec.program).map_err(|e| e.to_string())?;
    let model = ObsModel::parse(&rec.model, rec.uarch.geometry)
        .map_err(|e| e.to_string())?
        .with_syntactic_obs(rec.syntactic_obs);
    if rec.runs[0].is_empty() && matches!(rec.classification, Classification::Failure(_)) {
        // failed before running: nothing to re-execute
        let c = rec.classification.clone();
        return Ok(Replay { id: rec.id, stored: c.clone(), replayed: c, witness: Ok(true) });
    }
    let out = run_experiment(&program, &rec.testcase, &model, &rec.uarch, rec.repetitions, &rec.region);
    Ok(Replay { id: rec.id, stored: rec.classification.clone(), replayed: out.classification, witness: rec.witness_holds() })
}
