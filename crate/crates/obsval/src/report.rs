//! Campaign tables and counterexample listings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use obsval_core::concrete::ConcreteState;

use crate::db::{Entry, ExperimentRecord};
use crate::harness::Summary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown report format `{s}`")),
        }
    }
}

/// Summary counts keyed by (campaign, generator, model).
pub fn tally(entries: &[Entry]) -> BTreeMap<(String, String, String), Summary> {
    let mut rows: BTreeMap<(String, String, String), Summary> = BTreeMap::new();
    for e in entries {
        match e {
            Entry::Experiment(r) => rows
                .entry((r.campaign.clone(), r.generator.clone(), model_label(r)))
                .or_default()
                .add(&r.classification),
            Entry::Skipped(s) => {
                // skipped steps belong to the row of their campaign, if any
                if let Some((_, row)) = rows.iter_mut().find(|((c, _, _), _)| *c == s.campaign) {
                    row.skipped += 1;
                }
            }
        }
    }
    rows
}

fn model_label(r: &ExperimentRecord) -> String {
    if r.syntactic_obs {
        format!("{}+syntactic", r.model)
    } else {
        r.model.clone()
    }
}

const HEADER: [&str; 9] =
    ["campaign", "generator", "model", "experiments", "inconclusive", "counterexamples", "failures", "indistinguishable", "skipped"];

pub fn render(entries: &[Entry], format: Format) -> String {
    let rows = tally(entries);
    match format {
        Format::Csv => {
            let mut out = HEADER.join(",");
            out.push('\n');
            for ((c, g, m), s) in &rows {
                let _ = writeln!(
                    out,
                    "{c},{g},{m},{},{},{},{},{},{}",
                    s.experiments, s.inconclusive, s.counterexamples, s.failures, s.indistinguishable, s.skipped
                );
            }
            out
        }
        Format::Text => {
            let mut table: Vec<Vec<String>> = vec![HEADER.iter().map(|s| s.to_string()).collect()];
            for ((c, g, m), s) in &rows {
                table.push(vec![
                    c.clone(),
                    g.clone(),
                    m.clone(),
                    s.experiments.to_string(),
                    s.inconclusive.to_string(),
                    s.counterexamples.to_string(),
                    s.failures.to_string(),
                    s.indistinguishable.to_string(),
                    s.skipped.to_string(),
                ]);
            }
            let widths: Vec<usize> = (0..HEADER.len()).map(|i| table.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
            let mut out = String::new();
            for row in &table {
                let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            }
            for e in entries {
                if let Entry::Experiment(r) = e {
                    if r.classification.label() == "counterexample" {
                        out.push('\n');
                        out.push_str(&counterexample(r));
                    }
                }
            }
            out
        }
    }
}

/// Program, both inputs and the sets that told them apart.
pub fn counterexample(r: &ExperimentRecord) -> String {
    let mut out = format!("counterexample #{} ({}, {})\n", r.id, r.campaign, model_label(r));
    for line in r.program.lines() {
        let _ = writeln!(out, "    {line}");
    }
    let _ = writeln!(out, "  input 1: {}", state_summary(&r.testcase.s1));
    let _ = writeln!(out, "  input 2: {}", state_summary(&r.testcase.s2));
    let sets: Vec<String> = r.distinguishing_sets.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "  distinguishing sets: {}", sets.join(", "));
    out
}

/// Nonzero registers, set flags and memory words.
pub fn state_summary(s: &ConcreteState) -> String {
    let mut parts = Vec::new();
    for (n, v) in s.regs.iter().enumerate() {
        if *v != 0 {
            parts.push(format!("x{n}={v:#x}"));
        }
    }
    if s.z {
        parts.push("z".into());
    }
    if s.n {
        parts.push("n".into());
    }
    let mut words: BTreeMap<u64, u64> = BTreeMap::new();
    for (a, b) in &s.mem {
        *words.entry(a & !7).or_default() |= (*b as u64) << (8 * (a & 7));
    }
    for (a, w) in words {
        parts.push(format!("[{a:#x}]={w:#x}"));
    }
    if parts.is_empty() {
        "all zero".into()
    } else {
        parts.join(" ")
    }
}
