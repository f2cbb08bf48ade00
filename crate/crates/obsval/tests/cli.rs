use std::path::Path;
use std::process::{Command, Output};

fn obsval(args: &[&str], dir: &Path) -> Output {
    let solver = std::env::var("SCAMV_SOLVER").unwrap_or_else(|_| "z3".into());
    Command::new(env!("CARGO_BIN_EXE_obsval"))
        .args(args)
        .current_dir(dir)
        .env("SCAMV_SOLVER", solver)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const BRANCH: &str = "cmp x0, x1\nb.eq #12\nldr x2, [x3]\nb #8\nldr x2, [x4]\nnop\n";

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = obsval(&["gen", "--generator", "strides", "--count", "3", "--seed", "5"], dir.path());
    let b = obsval(&["gen", "--generator", "strides", "--count", "3", "--seed", "5"], dir.path());
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).matches("// strides").count(), 3);
    assert_eq!(obsval(&["gen", "--generator", "bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn relate_testgen_and_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.s"), BRANCH).unwrap();
    let r = obsval(&["relate", "p.s"], dir.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("path 1"));
    let t = obsval(&["testgen", "p.s", "--count", "2"], dir.path());
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let out = stdout(&t);
    let tcs: Vec<&str> = out.lines().collect();
    assert_eq!(tcs.len(), 2);
    std::fs::write(dir.path().join("tc.json"), tcs[0]).unwrap();
    let run = obsval(&["run", "p.s", "tc.json"], dir.path());
    assert!(run.status.success());
    assert!(stdout(&run).starts_with("indistinguishable"), "{}", stdout(&run));
}

#[test]
fn campaign_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "name = \"small\"\nprograms = 3\nexperiments_per_program = 2\nrepetitions = 2\n[generator]\nname = \"loads\"\nmax_len = 2\n",
    )
    .unwrap();
    let c = obsval(&["campaign", "c.toml", "--db", "x.jsonl", "--workers", "2"], dir.path());
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert!(stdout(&c).starts_with("experiments "));
    let rep = obsval(&["report", "--db", "x.jsonl", "--format", "csv"], dir.path());
    assert!(rep.status.success());
    assert!(stdout(&rep).lines().nth(1).unwrap().starts_with("small,loads,mwc,"));
    let rp = obsval(&["replay", "--db", "x.jsonl"], dir.path());
    assert!(rp.status.success());
    assert!(stdout(&rp).trim_end().ends_with(", 0 disagreeing"), "{}", stdout(&rp));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(obsval(&["relate", "missing.s"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.s"), "frob x1\n").unwrap();
    assert_eq!(obsval(&["relate", "bad.s"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "model = \"nope\"\n").unwrap();
    assert_eq!(obsval(&["campaign", "bad.toml"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("unknown.toml"), "colour = 1\n").unwrap();
    assert_eq!(obsval(&["campaign", "unknown.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(obsval(&["campaign", "absent.toml"], dir.path()).status.code(), Some(1));
    let report = obsval(&["report", "--db", "empty.jsonl"], dir.path());
    assert_eq!(report.status.code(), Some(0));
}
