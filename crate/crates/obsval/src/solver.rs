//! Solver backends: an external SMT-LIB process and the brute-force oracle.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use obsval_core::brute::BruteSolver;
use obsval_core::ir::Expr;
use obsval_core::smtlib::{parse_solver_output, to_smtlib};
use obsval_core::solve::{Solver, SolverError, SolverResult};

pub const SOLVER_ENV: &str = "SCAMV_SOLVER";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Runs a solver executable per query, feeding the script on stdin.
#[derive(Clone, Debug)]
pub struct ExternalSolver {
    pub command: Vec<String>,
    pub timeout: Duration,
    /// When set, every script is written here before solving.
    pub keep_queries: Option<PathBuf>,
    queries: u64,
}

impl ExternalSolver {
    /// `command` is split on whitespace. A bare `z3` reads files by
    /// default, so `-in` is added when no argument is given.
    pub fn new(command: &str, timeout: Duration) -> Result<Self, SolverError> {
        let mut parts: Vec<String> = command.split_whitespace().map(String::from).collect();
        if parts.is_empty() {
            return Err(SolverError::Crash("empty solver command".into()));
        }
        let exe = std::path::Path::new(&parts[0]).file_name().and_then(|s| s.to_str()).unwrap_or("");
        if parts.len() == 1 && (exe == "z3" || exe == "z3.exe") {
            parts.push("-in".into());
        }
        Ok(ExternalSolver { command: parts, timeout, keep_queries: None, queries: 0 })
    }

    /// The solver named by `SCAMV_SOLVER`, if set.
    pub fn from_env(timeout: Duration) -> Option<Result<Self, SolverError>> {
        let cmd = std::env::var(SOLVER_ENV).ok().filter(|s| !s.trim().is_empty())?;
        Some(Self::new(&cmd, timeout))
    }

    pub fn with_keep_queries(mut self, dir: Option<PathBuf>) -> Self {
        self.keep_queries = dir;
        self
    }

    /// Solves a complete script and parses the answer.
    pub fn run_script(&mut self, script: &str) -> Result<SolverResult, SolverError> {
        self.queries += 1;
        if let Some(dir) = &self.keep_queries {
            let name = format!("q{:08}-{:016x}.smt2", self.queries, obsval_core::experiment::fnv64(script.as_bytes()));
            if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(name), script)) {
                log::warn!("cannot keep query: {e}");
            }
        }
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolverError::Crash(format!("{}: {e}", self.command[0])))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let script = script.to_owned();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(script.as_bytes());
        });
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(st)) => break st,
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    let _ = writer.join();
                    let _ = reader.join();
                    return Err(SolverError::Timeout(self.timeout.as_millis() as u64));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(SolverError::Crash(e.to_string())),
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let trimmed = out.trim_start();
        if trimmed.is_empty() {
            let mut err = String::new();
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut err);
            }
            return Err(SolverError::Crash(format!("{status}: {}", err.trim())));
        }
        // z3 reports a model error after `unsat`; the verdict is what counts
        if trimmed.starts_with("unsat") {
            return Ok(SolverResult::Unsat);
        }
        parse_solver_output(trimmed)
    }
}

impl Solver for ExternalSolver {
    fn name(&self) -> &str {
        &self.command[0]
    }

    fn check(&mut self, f: &Expr) -> Result<SolverResult, SolverError> {
        let script = to_smtlib(f)?;
        self.run_script(&script)
    }
}

/// Backend selection as written in a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    External,
    Brute,
}

/// Builds a solver for one worker.
pub fn make_solver(
    backend: Backend,
    timeout: Duration,
    keep_queries: Option<PathBuf>,
    brute: &BruteSolver,
) -> Result<Box<dyn Solver + Send>, SolverError> {
    match backend {
        Backend::External => {
            let s = ExternalSolver::from_env(timeout)
                .ok_or_else(|| SolverError::Crash(format!("{SOLVER_ENV} is not set")))??;
            Ok(Box::new(s.with_keep_queries(keep_queries)))
        }
        Backend::Brute => Ok(Box::new(brute.clone())),
    }
}
