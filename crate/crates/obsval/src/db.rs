//! Append-only JSON-lines experiment database.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use obsval_core::concrete::MemRegion;
use obsval_core::experiment::Classification;
use obsval_core::geometry::CacheGeometry;
use obsval_core::ir::{eval_bool, parse_expr, Env, ParseCtx};
use obsval_core::testcase::TestCase;
use obsval_core::uarch::UarchConfig;

/// A classified experiment. Holds everything needed to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: u64,
    pub campaign: String,
    pub generator: String,
    /// Assembly text.
    pub program: String,
    pub program_id: u64,
    pub model: String,
    pub syntactic_obs: bool,
    pub region: MemRegion,
    pub uarch: UarchConfig,
    pub uarch_digest: u64,
    pub testcase: TestCase,
    /// The query the test case was drawn from, in IR syntax.
    pub relation: String,
    pub repetitions: usize,
    /// Final cache digests per repetition, for each input.
    pub runs: [Vec<u64>; 2],
    pub classification: Classification,
    pub distinguishing_sets: Vec<u64>,
    pub seed: u64,
    pub started_ms: u64,
    pub finished_ms: u64,
}

/// A cursor step that produced no experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub campaign: String,
    pub program: String,
    pub program_id: u64,
    pub step: u64,
    pub pair: (usize, usize),
    pub terms: Option<(u64, u64)>,
    pub reason: String,
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Entry {
    Experiment(ExperimentRecord),
    Skipped(SkipRecord),
}

impl ExperimentRecord {
    /// Re-checks that the stored inputs satisfy the stored query.
    pub fn witness_holds(&self) -> Result<bool, String> {
        let ctx = ParseCtx::with_geometry(self.uarch.geometry);
        let q = parse_expr(&self.relation, &ctx).map_err(|e| e.to_string())?;
        let env = Env::from_pair(&self.testcase.s1, &self.testcase.s2);
        eval_bool(&q, &env).map_err(|e| e.to_string())
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.uarch.geometry
    }
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("cannot encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

/// A line that could not be decoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorruptRecord {
    pub line: usize,
    pub error: String,
}

/// Selects entries during a scan.
#[derive(Clone, Debug, Default)]
pub struct Filter {
    pub classification: Option<String>,
    pub campaign: Option<String>,
    pub id: Option<u64>,
    pub include_skipped: bool,
}

impl Filter {
    pub fn matches(&self, e: &Entry) -> bool {
        match e {
            Entry::Skipped(s) => {
                self.include_skipped
                    && self.classification.is_none()
                    && self.id.is_none()
                    && self.campaign.as_ref().is_none_or(|c| *c == s.campaign)
            }
            Entry::Experiment(r) => {
                self.classification.as_ref().is_none_or(|c| c == r.classification.label())
                    && self.campaign.as_ref().is_none_or(|c| *c == r.campaign)
                    && self.id.is_none_or(|i| i == r.id)
            }
        }
    }
}

pub struct Db {
    path: PathBuf,
    file: Option<File>,
}

impl Db {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Db { path: path.into(), file: None }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one entry as a single line and flushes it.
    pub fn append(&mut self, e: &Entry) -> Result<(), DbError> {
        let mut line = serde_json::to_string(e)?;
        line.push('\n');
        if self.file.is_none() {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| DbError::Io(self.path.clone(), e))?;
            self.file = Some(f);
        }
        let f = self.file.as_mut().unwrap();
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| DbError::Io(self.path.clone(), e))
    }

    /// Streams matching entries. Undecodable lines are reported and
    /// skipped; a missing file is an empty database.
    pub fn scan(&self, filter: &Filter) -> Result<(Vec<Entry>, Vec<CorruptRecord>), DbError> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new())),
            Err(e) => return Err(DbError::Io(self.path.clone(), e)),
        };
        let mut out = Vec::new();
        let mut bad = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| DbError::Io(self.path.clone(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Entry>(&line) {
                Ok(e) => {
                    if filter.matches(&e) {
                        out.push(e);
                    }
                }
                Err(e) => {
                    log::warn!("{}:{}: corrupt record skipped: {e}", self.path.display(), n + 1);
                    bad.push(CorruptRecord { line: n + 1, error: e.to_string() });
                }
            }
        }
        Ok((out, bad))
    }

    pub fn experiments(&self, filter: &Filter) -> Result<Vec<ExperimentRecord>, DbError> {
        let (es, _) = self.scan(filter)?;
        Ok(es
            .into_iter()
            .filter_map(|e| match e {
                Entry::Experiment(r) => Some(r),
                Entry::Skipped(_) => None,
            })
            .collect())
    }

    /// Largest experiment id present, used to continue numbering.
    pub fn last_id(&self) -> Result<Option<u64>, DbError> {
        Ok(self.experiments(&Filter::default())?.iter().map(|r| r.id).max())
    }
}
