//! Deterministic L1 data-cache simulator standing in for hardware.
//!
//! Replacement is LRU. Two optional quirks can be switched on: a stride
//! prefetcher that refuses to cross 4 KiB pages, and "previction", where
//! back-to-back misses to one set evict lines that have been resident for
//! a while. Seeded noise invalidates random lines after a run.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concrete::{run_concrete_trace, ConcreteState, ExecError, MemOp, MemRegion};
use crate::geometry::CacheGeometry;
use crate::isa::Program;

const PAGE_BYTES: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrefetchConfig {
    pub enabled: bool,
    /// Misses in one stride needed before prefetching starts.
    pub k: u32,
    /// Lines fetched ahead each time the prefetcher fires.
    pub n_pf: u32,
    /// Largest stride tracked, in lines.
    pub max_stride_lines: u32,
    pub respect_4k_pages: bool,
}

impl Default for PrefetchConfig {
    fn default() -> Self {
        PrefetchConfig { enabled: false, k: 3, n_pf: 3, max_stride_lines: 4, respect_4k_pages: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrevictionConfig {
    pub enabled: bool,
    /// A line is settled once it has been resident for more than this
    /// many instructions.
    pub settle_gap: u64,
}

impl Default for PrevictionConfig {
    fn default() -> Self {
        PrevictionConfig { enabled: false, settle_gap: 8 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub seed: u64,
    pub flip_probability: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UarchConfig {
    pub geometry: CacheGeometry,
    pub prefetch: PrefetchConfig,
    pub previction: PrevictionConfig,
    pub noise: NoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("prefetch k must be at least 2")]
    K,
    #[error("prefetch n_pf must be at least 1")]
    NPf,
    #[error("previction settle gap must be at least 1")]
    Gap,
    #[error("noise probability must lie in [0, 1]")]
    Probability,
}

impl UarchConfig {
    /// Plain LRU cache, no quirks, no noise.
    pub fn baseline(geometry: CacheGeometry) -> Self {
        UarchConfig { geometry, ..UarchConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.prefetch.k < 2 {
            return Err(ConfigError::K);
        }
        if self.prefetch.n_pf < 1 {
            return Err(ConfigError::NPf);
        }
        if self.previction.settle_gap < 1 {
            return Err(ConfigError::Gap);
        }
        if !(0.0..=1.0).contains(&self.noise.flip_probability) {
            return Err(ConfigError::Probability);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Line {
    pub tag: u64,
    pub fill_time: u64,
}

/// Valid lines of every set, most recently used first; a line's position
/// is its LRU rank.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheState {
    geometry: CacheGeometry,
    sets: Vec<Vec<Line>>,
}

impl CacheState {
    pub fn empty(geometry: CacheGeometry) -> Self {
        CacheState { geometry, sets: alloc::vec![Vec::new(); geometry.sets() as usize] }
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.geometry
    }

    pub fn lines(&self, set: u64) -> &[Line] {
        &self.sets[set as usize]
    }

    pub fn valid_tags(&self, set: u64) -> Vec<u64> {
        let mut tags: Vec<u64> = self.sets[set as usize].iter().map(|l| l.tag).collect();
        tags.sort_unstable();
        tags
    }

    pub fn valid_count(&self, set: u64) -> usize {
        self.sets[set as usize].len()
    }

    pub fn lru_rank(&self, set: u64, tag: u64) -> Option<usize> {
        self.sets[set as usize].iter().position(|l| l.tag == tag)
    }

    pub fn contains(&self, addr: u64) -> bool {
        let g = self.geometry;
        self.lru_rank(g.index(addr), g.tag(addr)).is_some()
    }

    /// `(set, tag)` of every valid line, sorted.
    pub fn resident(&self) -> Vec<(u64, u64)> {
        (0..self.geometry.sets()).flat_map(|s| self.valid_tags(s).into_iter().map(move |t| (s, t))).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(Vec::is_empty)
    }

    pub fn invalidate(&mut self, set: u64, tag: u64) -> bool {
        let lines = &mut self.sets[set as usize];
        let before = lines.len();
        lines.retain(|l| l.tag != tag);
        lines.len() != before
    }

    /// Canonical text form: one `set: tag tag ..` line per non-empty set,
    /// tags sorted, in hex.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in 0..self.geometry.sets() {
            let tags = self.valid_tags(s);
            if tags.is_empty() {
                continue;
            }
            let _ = write!(out, "{s}:");
            for t in tags {
                let _ = write!(out, " {t:#x}");
            }
            out.push('\n');
        }
        out
    }

    fn touch(&mut self, set: u64, tag: u64) -> bool {
        let lines = &mut self.sets[set as usize];
        match lines.iter().position(|l| l.tag == tag) {
            Some(i) => {
                let l = lines.remove(i);
                lines.insert(0, l);
                true
            }
            None => false,
        }
    }

    /// Fills a line as most recently used, evicting the LRU way if full.
    fn fill(&mut self, set: u64, tag: u64, now: u64) -> Option<u64> {
        let ways = self.geometry.ways as usize;
        let lines = &mut self.sets[set as usize];
        let evicted = if lines.len() >= ways { lines.pop().map(|l| l.tag) } else { None };
        lines.insert(0, Line { tag, fill_time: now });
        evicted
    }
}

/// Stride detector state, in line addresses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefetchTracker {
    pub last_miss_addr: Option<u64>,
    pub last_delta: i64,
    pub streak: u32,
    /// Set and outcome (miss = true) of the previous data access.
    pub last_access: Option<(u64, bool)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheEvent {
    Hit { set: u64, tag: u64 },
    Fill { set: u64, tag: u64, evicted: Option<u64> },
    Prefetch { addr: u64, evicted: Option<u64> },
    Previct { set: u64, tag: u64 },
}

/// Feeds one data access through the cache.
pub fn cache_access(
    cache: &mut CacheState,
    tracker: &mut PrefetchTracker,
    addr: u64,
    op: MemOp,
    now: u64,
    cfg: &UarchConfig,
) -> Vec<CacheEvent> {
    let g = cfg.geometry;
    let (set, tag) = (g.index(addr), g.tag(addr));
    let mut events = Vec::new();
    if cache.touch(set, tag) {
        events.push(CacheEvent::Hit { set, tag });
        tracker.last_access = Some((set, false));
        return events;
    }
    if cfg.previction.enabled && op == MemOp::Rd && tracker.last_access == Some((set, true)) {
        let gap = cfg.previction.settle_gap;
        let settled: Vec<u64> =
            cache.lines(set).iter().filter(|l| now.saturating_sub(l.fill_time) > gap).map(|l| l.tag).collect();
        for t in settled {
            cache.invalidate(set, t);
            events.push(CacheEvent::Previct { set, tag: t });
        }
    }
    let evicted = cache.fill(set, tag, now);
    events.push(CacheEvent::Fill { set, tag, evicted });
    tracker.last_access = Some((set, true));
    if cfg.prefetch.enabled {
        prefetch(cache, tracker, g.line_addr(addr), now, cfg, &mut events);
    }
    events
}

fn prefetch(
    cache: &mut CacheState,
    tracker: &mut PrefetchTracker,
    line: u64,
    now: u64,
    cfg: &UarchConfig,
    events: &mut Vec<CacheEvent>,
) {
    let g = cfg.geometry;
    let pf = &cfg.prefetch;
    let max = pf.max_stride_lines as i64 * g.line_bytes() as i64;
    match tracker.last_miss_addr {
        Some(last) => {
            let delta = line.wrapping_sub(last) as i64;
            let trackable = delta != 0 && delta.abs() <= max;
            tracker.streak = match (trackable, delta == tracker.last_delta) {
                (false, _) => 0,
                (true, true) => tracker.streak + 1,
                (true, false) => 1,
            };
            tracker.last_delta = delta;
        }
        None => {
            tracker.streak = 0;
            tracker.last_delta = 0;
        }
    }
    tracker.last_miss_addr = Some(line);
    if tracker.streak + 1 < pf.k {
        return;
    }
    let delta = tracker.last_delta;
    for i in 1..=pf.n_pf as i64 {
        let a = line.wrapping_add((i * delta) as u64);
        if pf.respect_4k_pages && a / PAGE_BYTES != line / PAGE_BYTES {
            break;
        }
        let (set, tag) = (g.index(a), g.tag(a));
        if cache.touch(set, tag) {
            continue;
        }
        let evicted = cache.fill(set, tag, now);
        events.push(CacheEvent::Prefetch { addr: a, evicted });
    }
}

/// Outcome of one simulated execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UarchRun {
    pub cache: CacheState,
    pub events: Vec<CacheEvent>,
}

/// Runs `program` from `init` on an initially empty cache and returns the
/// final cache state. Noise, when enabled, is applied after the run from
/// `cfg.noise.seed`.
pub fn run_on_uarch(
    program: &Program,
    init: &ConcreteState,
    cfg: &UarchConfig,
    region: &MemRegion,
) -> Result<UarchRun, ExecError> {
    let trace = run_concrete_trace(program, init, region)?;
    let mut cache = CacheState::empty(cfg.geometry);
    let mut tracker = PrefetchTracker::default();
    let mut events = Vec::new();
    let mut evs = trace.events.iter();
    let mut pending = evs.next();
    for (now, &pc) in trace.executed.iter().enumerate() {
        while let Some(ev) = pending.filter(|e| e.pc == pc) {
            events.extend(cache_access(&mut cache, &mut tracker, ev.addr, ev.op, now as u64, cfg));
            pending = evs.next();
        }
    }
    if cfg.noise.enabled && cfg.noise.flip_probability > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);
        for (set, tag) in cache.resident() {
            if rng.random_bool(cfg.noise.flip_probability) {
                cache.invalidate(set, tag);
            }
        }
    }
    Ok(UarchRun { cache, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Reg;

    fn prefetching() -> UarchConfig {
        let mut cfg = UarchConfig::default();
        cfg.prefetch.enabled = true;
        cfg
    }

    fn previcting() -> UarchConfig {
        let mut cfg = UarchConfig::default();
        cfg.previction.enabled = true;
        cfg
    }

    #[test]
    fn back_to_back_misses_keep_fresh_lines() {
        let cfg = previcting();
        let mut c = CacheState::empty(cfg.geometry);
        let mut t = PrefetchTracker::default();
        for (now, a) in [0x8010_0000u64, 0x8011_0000, 0x8012_0000].into_iter().enumerate() {
            cache_access(&mut c, &mut t, a, MemOp::Rd, now as u64, &cfg);
        }
        assert_eq!(c.valid_count(0), 3);
    }

    #[test]
    fn gap_before_second_miss_previcts_first_line() {
        let cfg = previcting();
        let mut c = CacheState::empty(cfg.geometry);
        let mut t = PrefetchTracker::default();
        for (now, a) in [(2, 0x8010_0000u64), (17, 0x8011_0000), (18, 0x8012_0000)] {
            cache_access(&mut c, &mut t, a, MemOp::Rd, now, &cfg);
        }
        let g = cfg.geometry;
        assert_eq!(c.valid_tags(0), [g.tag(0x8011_0000), g.tag(0x8012_0000)]);
    }

    #[test]
    fn stride_prefetch_stays_in_page() {
        let cfg = prefetching();
        let mut c = CacheState::empty(cfg.geometry);
        let mut t = PrefetchTracker::default();
        for (now, a) in [0x8010_0cc0u64, 0x8010_0d40, 0x8010_0dc0].into_iter().enumerate() {
            cache_access(&mut c, &mut t, a, MemOp::Rd, now as u64, &cfg);
        }
        let sets: Vec<u64> = c.resident().into_iter().map(|(s, _)| s).collect();
        assert_eq!(sets, [51, 53, 55, 57, 59, 61]);

        // starting two lines below the page end, prefetches would cross it
        let mut c = CacheState::empty(cfg.geometry);
        let mut t = PrefetchTracker::default();
        for (now, a) in [0x8010_0e00u64, 0x8010_0e80, 0x8010_0f00].into_iter().enumerate() {
            cache_access(&mut c, &mut t, a, MemOp::Rd, now as u64, &cfg);
        }
        let sets: Vec<u64> = c.resident().into_iter().map(|(s, _)| s).collect();
        assert_eq!(sets, [56, 58, 60, 62]);
    }

    #[test]
    fn lru_evicts_least_recent() {
        let cfg = UarchConfig::default();
        let g = cfg.geometry;
        let mut c = CacheState::empty(g);
        let mut t = PrefetchTracker::default();
        let addrs: Vec<u64> = (0..5).map(|k| g.compose(k, 3, 0)).collect();
        cache_access(&mut c, &mut t, addrs[0], MemOp::Rd, 0, &cfg);
        for (i, &a) in addrs[1..4].iter().enumerate() {
            cache_access(&mut c, &mut t, a, MemOp::Rd, i as u64 + 1, &cfg);
        }
        // refresh the first line, so the second one is now the LRU
        cache_access(&mut c, &mut t, addrs[0], MemOp::Rd, 4, &cfg);
        cache_access(&mut c, &mut t, addrs[4], MemOp::Wt, 5, &cfg);
        assert_eq!(c.valid_tags(3), [0, 2, 3, 4]);
        assert_eq!(c.lru_rank(3, 4), Some(0));
    }

    #[test]
    fn previction_program_distinguishes_paths() {
        let mut text = String::from("cmp x0, x1\nb.eq #0x14\nldr x9, [x2]\nldr x9, [x3]\nldr x9, [x4]\nb #0x48\nldr x9, [x2]\n");
        for _ in 0..14 {
            text.push_str("nop\n");
        }
        text.push_str("ldr x9, [x3]\nldr x9, [x4]\n");
        let p = Program::parse(&text).unwrap();
        let base = ConcreteState::new()
            .with_reg(Reg::x(2), 0x8010_0000)
            .with_reg(Reg::x(3), 0x8011_0000)
            .with_reg(Reg::x(4), 0x8012_0000);
        let taken = base.clone();
        let fallthrough = base.with_reg(Reg::x(1), 1);
        let region = MemRegion::default();
        let cfg = previcting();
        let a = run_on_uarch(&p, &taken, &cfg, &region).unwrap().cache;
        let b = run_on_uarch(&p, &fallthrough, &cfg, &region).unwrap().cache;
        assert_eq!((a.valid_count(0), b.valid_count(0)), (2, 3));
        assert!(!a.contains(0x8010_0000));
        let plain = UarchConfig::default();
        let a = run_on_uarch(&p, &taken, &plain, &region).unwrap().cache;
        assert_eq!(a.valid_count(0), 3);
    }

    #[test]
    fn noise_is_seeded() {
        let p = Program::parse("ldr x1, [x2]\nldr x1, [x2, #64]\nldr x1, [x2, #128]").unwrap();
        let s = ConcreteState::new().with_reg(Reg::x(2), 0x8000_0000);
        let mut cfg = UarchConfig { noise: NoiseConfig { enabled: true, seed: 7, flip_probability: 0.5 }, ..Default::default() };
        let region = MemRegion::default();
        let a = run_on_uarch(&p, &s, &cfg, &region).unwrap();
        let b = run_on_uarch(&p, &s, &cfg, &region).unwrap();
        assert_eq!(a, b);
        cfg.noise.flip_probability = 1.0;
        assert!(run_on_uarch(&p, &s, &cfg, &region).unwrap().cache.is_empty());
    }

    #[test]
    fn dump_is_canonical() {
        let g = CacheGeometry::default();
        let cfg = UarchConfig::baseline(g);
        let mut c = CacheState::empty(g);
        let mut t = PrefetchTracker::default();
        cache_access(&mut c, &mut t, 0x8000_2040, MemOp::Rd, 0, &cfg);
        cache_access(&mut c, &mut t, 0x8000_0040, MemOp::Rd, 1, &cfg);
        assert_eq!(c.dump(), "1: 0x40000 0x40001\n");
    }
}
