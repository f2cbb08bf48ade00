//! Campaign configuration, read from TOML.
//!
//! ```toml
//! name = "stride-61"
//! programs = 10
//! experiments_per_program = 20
//! model = "pmwc:61"
//!
//! [generator]
//! name = "strides"
//! steps = 3
//! stride_lines = 2
//!
//! [relation]
//! guard = "no-observations"
//! term = "index(addr(0))"
//! range = [0, 63]
//!
//! [uarch.prefetch]
//! enabled = true
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use obsval_core::brute::BruteSolver;
use obsval_core::concrete::MemRegion;
use obsval_core::experiment::DEFAULT_REPETITIONS;
use obsval_core::gen::GeneratorSpec;
use obsval_core::ir::{parse_expr, MemValue, ParseCtx};
use obsval_core::obs::ObsModel;
use obsval_core::relation::{PathGuard, TermSpec};
use obsval_core::symexec::DEFAULT_PATH_CAP;
use obsval_core::uarch::UarchConfig;

use crate::solver::Backend;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid campaign file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationConfig {
    /// `"no-observations"` or a predicate over one copy.
    pub guard: Option<String>,
    /// Expression whose value pair is enumerated.
    pub term: Option<String>,
    /// Inclusive bounds of the term range.
    pub range: Option<[u64; 2]>,
    /// Explicit term values; overrides `range`.
    pub values: Option<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub base: u64,
    pub size: u64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig { base: MemRegion::DEFAULT.base, size: MemRegion::DEFAULT.size }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub generator: GeneratorSpec,
    pub model: String,
    /// Give discarded loads no observation.
    pub syntactic_obs: bool,
    pub relation: RelationConfig,
    pub uarch: UarchConfig,
    pub region: RegionConfig,
    pub programs: usize,
    pub experiments_per_program: usize,
    /// Stop once this many experiments have been classified.
    pub max_experiments: Option<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub workers: usize,
    pub path_cap: usize,
    pub solver: Backend,
    pub solver_timeout_ms: u64,
    /// Candidate register values for the brute backend.
    pub brute_values: Vec<u64>,
    pub db: PathBuf,
    pub keep_queries: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            name: "campaign".into(),
            generator: GeneratorSpec::Loads { max_len: 3, allow_xzr: true },
            model: "mwc".into(),
            syntactic_obs: false,
            relation: RelationConfig::default(),
            uarch: UarchConfig::default(),
            region: RegionConfig::default(),
            programs: 10,
            experiments_per_program: 10,
            max_experiments: None,
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            workers: 1,
            path_cap: DEFAULT_PATH_CAP,
            solver: Backend::External,
            solver_timeout_ms: 30_000,
            brute_values: Vec::new(),
            db: PathBuf::from("obsval.jsonl"),
            keep_queries: None,
        }
    }
}

/// The parsed, checked form of a campaign.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub model: ObsModel,
    pub guard: Option<PathGuard>,
    pub term: Option<TermSpec>,
    pub region: MemRegion,
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: CampaignConfig = toml::from_str(text)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_owned(), e))?;
        Self::from_toml(&text)
    }

    pub fn solver_timeout(&self) -> Duration {
        Duration::from_millis(self.solver_timeout_ms)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let bad = |m: String| ConfigError::Invalid(m);
        self.uarch.validate().map_err(|e| bad(format!("uarch: {e}")))?;
        let model = ObsModel::parse(&self.model, self.uarch.geometry)
            .map_err(|e| bad(format!("model: {e}")))?
            .with_syntactic_obs(self.syntactic_obs);
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(bad("workers must be at least 1".into()));
        }
        if self.region.size == 0 || self.region.base.checked_add(self.region.size).is_none() {
            return Err(bad("region is empty or wraps around".into()));
        }
        if let GeneratorSpec::Strides { steps, stride_lines, .. } = &self.generator {
            if *steps < 3 || !(1..=4).contains(stride_lines) {
                return Err(bad("strides need steps >= 3 and stride_lines in 1..=4".into()));
            }
        }
        if let GeneratorSpec::Random { weights, length } = &self.generator {
            if !weights.is_valid() || *length == 0 {
                return Err(bad("random generator needs a positive weight and length".into()));
            }
        }
        let ctx = ParseCtx { geometry: Some(self.uarch.geometry), visible_from: model.visible_from(), addrs: Vec::new() };
        let guard = match self.relation.guard.as_deref() {
            None => None,
            Some("no-observations") => Some(PathGuard::NoObservations),
            Some(text) => Some(PathGuard::Predicate(parse_expr(text, &ctx).map_err(|e| bad(format!("guard: {e}")))?)),
        };
        let term = match &self.relation.term {
            None => None,
            Some(text) => {
                let range: Vec<u64> = match (&self.relation.values, self.relation.range) {
                    (Some(v), _) => v.clone(),
                    (None, Some([lo, hi])) if lo <= hi && hi - lo < 1 << 16 => (lo..=hi).collect(),
                    _ => return Err(bad("term needs `values` or a small `range`".into())),
                };
                if range.is_empty() {
                    return Err(bad("term range is empty".into()));
                }
                // check the syntax with enough dummy accesses for any addr(k)
                let mut probe = ctx.clone();
                probe.addrs = (0..64).map(obsval_core::ir::Expr::c64).collect();
                parse_expr(text, &probe).map_err(|e| bad(format!("term: {e}")))?;
                Some(TermSpec { text: text.clone(), range })
            }
        };
        Ok(Resolved { model, guard, term, region: MemRegion::new(self.region.base, self.region.size) })
    }

    /// The brute backend: the configured values, or a few aligned
    /// addresses at the start of the region.
    pub fn brute_solver(&self) -> BruteSolver {
        let values = if self.brute_values.is_empty() {
            (0..8).map(|k| self.region.base + 64 * k).collect()
        } else {
            self.brute_values.clone()
        };
        BruteSolver::new(values, vec![MemValue::default()])
    }
}
