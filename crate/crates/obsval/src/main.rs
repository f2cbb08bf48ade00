use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obsval::config::CampaignConfig;
use obsval::db::{Db, Filter};
use obsval::harness::{program_seed, record_for, replay, run_campaign};
use obsval::report::{render, Format};
use obsval::solver::make_solver;
use obsval_core::experiment::{draw, prepare, DrawParams, Drawn};
use obsval_core::gen::GeneratorSpec;
use obsval_core::isa::Program;
use obsval_core::relation::synth_relation;
use obsval_core::testcase::TestCase;

#[derive(Parser)]
#[command(name = "obsval", version, about = "Validate cache side-channel observational models against a simulated core")]
struct Cli {
    /// Campaign seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment database (overrides the config).
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// Solver timeout in seconds.
    #[arg(long, global = true)]
    solver_timeout: Option<u64>,
    /// Keep every SMT-LIB query in this directory.
    #[arg(long, global = true)]
    keep_queries: Option<PathBuf>,
    /// Campaign file supplying model, generator and simulator settings.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print generated programs.
    Gen {
        /// random, loads, strides or branch-loads (default: the config's).
        #[arg(long)]
        generator: Option<String>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Dump the annotated IR, the symbolic paths and the relation of a program.
    Relate { program: PathBuf },
    /// Draw test cases for a program; one JSON object per line.
    Testgen {
        program: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Run one program on a test case (JSON) and classify it.
    Run { program: PathBuf, testcase: PathBuf },
    /// Run a campaign file.
    Campaign {
        file: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-run stored experiments and compare classifications.
    Replay {
        #[arg(long)]
        id: Option<u64>,
        /// Only records of this classification.
        #[arg(long)]
        class: Option<String>,
    },
    /// Summarize the database.
    Report {
        #[arg(long, default_value = "text")]
        format: Format,
        #[arg(long)]
        campaign: Option<String>,
    },
}

enum Fail {
    Io(String),
    Config(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Io(_) => 1,
            Fail::Config(_) => 2,
        }
    }
}

fn io(e: impl std::fmt::Display) -> Fail {
    Fail::Io(e.to_string())
}

fn conf(e: impl std::fmt::Display) -> Fail {
    Fail::Config(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Fail::Io(m) | Fail::Config(m)) = &f;
            eprintln!("obsval: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(cli: &Cli, path: Option<&Path>) -> Result<CampaignConfig, Fail> {
    let mut cfg = match path.or(cli.config.as_deref()) {
        Some(p) => CampaignConfig::load(p).map_err(|e| match e {
            obsval::config::ConfigError::Io(..) => io(e),
            _ => conf(e),
        })?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(db) = &cli.db {
        cfg.db = db.clone();
    }
    if let Some(t) = cli.solver_timeout {
        cfg.solver_timeout_ms = t * 1000;
    }
    if cli.keep_queries.is_some() {
        cfg.keep_queries = cli.keep_queries.clone();
    }
    cfg.resolve().map_err(conf)?;
    Ok(cfg)
}

fn read_program(path: &Path) -> Result<Program, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    let p = Program::parse(&text).map_err(conf)?;
    p.validate().map_err(conf)?;
    Ok(p)
}

fn named_generator(name: &str) -> Result<GeneratorSpec, Fail> {
    let toml_text = format!("name = \"{name}\"");
    toml::from_str(&toml_text).map_err(|_| conf(format!("unknown generator `{name}`")))
}

fn run(cli: Cli) -> Result<(), Fail> {
    match &cli.cmd {
        Cmd::Gen { generator, count } => {
            let cfg = load_config(&cli, None)?;
            let spec = match generator {
                Some(n) => named_generator(n)?,
                None => cfg.generator.clone(),
            };
            for k in 0..*count {
                let seed = program_seed(cfg.seed, k);
                println!("// {} seed {seed:#018x}\n{}", spec.name(), spec.generate(seed));
            }
        }
        Cmd::Relate { program } => {
            let cfg = load_config(&cli, None)?;
            let r = cfg.resolve().map_err(conf)?;
            let p = read_program(program)?;
            let prep = prepare(&p, &r.model, None, cfg.path_cap).map_err(conf)?;
            println!("{}", prep.ir);
            for (i, path) in prep.paths.iter().enumerate() {
                println!("path {i}\n{path}");
            }
            println!("relation\n{}", synth_relation(&prep.paths, &r.region));
        }
        Cmd::Testgen { program, count } => {
            let cfg = load_config(&cli, None)?;
            let r = cfg.resolve().map_err(conf)?;
            let p = read_program(program)?;
            let prep = prepare(&p, &r.model, r.term.as_ref(), cfg.path_cap).map_err(conf)?;
            let mut solver = make_solver(cfg.solver, cfg.solver_timeout(), cfg.keep_queries.clone(), &cfg.brute_solver())
                .map_err(conf)?;
            let params = DrawParams {
                model: &r.model,
                guard: r.guard.as_ref(),
                guard_name: cfg.relation.guard.clone(),
                term: r.term.as_ref(),
                region: r.region,
                seed: cfg.seed,
            };
            let mut found = 0;
            let mut k = 0;
            while found < *count && k < (*count as u64).saturating_mul(64).max(64) {
                let Some(step) = prep.cursor.step_at(k) else { break };
                k += 1;
                match draw(&prep, &step, &params, solver.as_mut()) {
                    Drawn::Test { tc, .. } => {
                        println!("{}", serde_json::to_string(&tc).map_err(io)?);
                        found += 1;
                    }
                    Drawn::Skipped(why) => log::info!("step {}: skipped ({why})", step.index),
                    Drawn::Failed(why) => log::warn!("step {}: {why}", step.index),
                }
            }
        }
        Cmd::Run { program, testcase } => {
            let cfg = load_config(&cli, None)?;
            let r = cfg.resolve().map_err(conf)?;
            let p = read_program(program)?;
            let text = std::fs::read_to_string(testcase).map_err(|e| io(format!("{}: {e}", testcase.display())))?;
            let tc: TestCase = serde_json::from_str(&text).map_err(conf)?;
            let (rec, out) = record_for(&cfg, &r.model, &p, tc, "true".into(), r.region, 0, cfg.seed);
            println!("{}", rec.classification.label());
            if !rec.distinguishing_sets.is_empty() {
                println!("distinguishing sets: {:?}", rec.distinguishing_sets);
            }
            if let Some([a, b]) = out.finals {
                println!("final cache, input 1:\n{}final cache, input 2:\n{}", a.dump(), b.dump());
            }
        }
        Cmd::Campaign { file, workers } => {
            let mut cfg = load_config(&cli, Some(file))?;
            if let Some(w) = workers {
                cfg.workers = (*w).max(1);
            }
            let mut db = Db::open(&cfg.db);
            let s = run_campaign(&cfg, &mut db).map_err(|e| match e {
                obsval::harness::HarnessError::Db(e) => io(e),
                e => conf(e),
            })?;
            println!(
                "experiments {}  inconclusive {}  counterexamples {}  failures {}  skipped {}",
                s.experiments, s.inconclusive, s.counterexamples, s.failures, s.skipped
            );
        }
        Cmd::Replay { id, class } => {
            let db = Db::open(cli.db.clone().unwrap_or_else(|| CampaignConfig::default().db));
            let filter = Filter { id: *id, classification: class.clone(), ..Default::default() };
            let recs = db.experiments(&filter).map_err(io)?;
            let mut mismatches = 0;
            for rec in &recs {
                match replay(rec) {
                    Ok(r) => {
                        let ok = r.agrees() && r.witness == Ok(true);
                        mismatches += !ok as usize;
                        println!(
                            "#{} stored {} replayed {} witness {}",
                            r.id,
                            r.stored.label(),
                            r.replayed.label(),
                            match &r.witness {
                                Ok(b) => b.to_string(),
                                Err(e) => e.clone(),
                            }
                        );
                    }
                    Err(e) => {
                        mismatches += 1;
                        println!("#{} cannot replay: {e}", rec.id);
                    }
                }
            }
            println!("{} replayed, {mismatches} disagreeing", recs.len());
        }
        Cmd::Report { format, campaign } => {
            let db = Db::open(cli.db.clone().unwrap_or_else(|| CampaignConfig::default().db));
            let filter = Filter { campaign: campaign.clone(), include_skipped: true, ..Default::default() };
            let (entries, bad) = db.scan(&filter).map_err(io)?;
            if !bad.is_empty() {
                log::warn!("{} corrupt records skipped", bad.len());
            }
            print!("{}", render(&entries, *format));
        }
    }
    Ok(())
}
