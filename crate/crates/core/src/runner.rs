//! Executes a run configuration: commands in order, CSV tables and a JSON
//! manifest in the output directory, and an exit status derived from the
//! verdicts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::applications::{build_example, build_risk_process};
use crate::array::ArrayModel;
use crate::conditions::{
    check_condition_a, check_condition_b, check_condition_c, check_condition_d2, classify_condition_d, ConditionBGrids, ConditionReport,
    SweepSettings,
};
use crate::config::{Command, Resolved, RunConfig};
use crate::diagnostics::{convergence_sweep, j_compactness_probe, stopping_inclusion, ProbeSpec, SweepSpec};
use crate::error::{Error, Result};
use crate::path::fmt17;
use crate::seed::{child_rng, child_seed, stream, SPLITTING_RULE};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const DEFAULT_OUT: &str = "maxsum-out";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Replaces the configured command list.
    pub commands: Option<Vec<Command>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// `None` when validation failed before anything was written.
    pub out_dir: Option<PathBuf>,
    pub verdicts: Vec<(String, bool)>,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
struct CommandRecord {
    name: String,
    pass: bool,
    verdict: String,
    files: Vec<String>,
    details: serde_json::Value,
}

fn verdict_text(pass: bool) -> String {
    if pass {
        "consistent with the limit statement on this grid".into()
    } else {
        "not consistent with the limit statement on this grid".into()
    }
}

fn b(x: bool) -> String {
    x.to_string()
}

struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn write_table(dir: &Path, t: &Table) -> Result<String> {
    let file = format!("{}.csv", t.name);
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(file)
}

fn level_grid(horizon: f64, step: f64) -> Vec<f64> {
    let m = (horizon / step + 1e-9).floor() as usize;
    (0..=m).map(|i| (i as f64 * step).min(horizon)).collect()
}

struct Executed {
    record: CommandRecord,
    tables: Vec<Table>,
}

fn run_verify(r: &Resolved) -> Result<Executed> {
    let v = &r.config.verify;
    let s = SweepSettings { n_list: v.n_list.clone(), samples_per_n: v.samples_per_n, root_seed: r.seed, tolerance: v.tolerance };
    let mut sections = Vec::new();
    let want = |k: &str| v.conditions.iter().any(|c| c == k);
    if want("a") {
        sections.push(check_condition_a(&r.model, &r.chars, &s, &v.u_grid)?);
    }
    if want("b") {
        let grids = ConditionBGrids {
            v_grid: v.v_grid.clone(),
            w_grid: v.w_grid.clone(),
            variance_levels: v.variance_levels.clone(),
            family: v.family.clone(),
        };
        sections.push(check_condition_b(&r.model, &r.chars, &s, &grids)?);
    }
    if want("c") {
        sections.push(check_condition_c(&r.model, &r.chars, &s, &v.u_grid, &v.family)?);
    }
    let d = classify_condition_d(&r.chars);
    if want("d") && d.d2 {
        sections.push(check_condition_d2(&r.model, &r.chars, &s)?);
    }
    let report = ConditionReport { sections, root_seed: r.seed, samples_per_n: v.samples_per_n };
    let mut rows = Vec::new();
    let mut verdict_rows = Vec::new();
    for sec in &report.sections {
        for x in &sec.rows {
            rows.push(vec![
                sec.name.clone(),
                x.condition.clone(),
                fmt17(x.n),
                x.probe.clone(),
                fmt17(x.empirical),
                fmt17(x.target),
                fmt17(x.abs_error),
                fmt17(x.se),
                fmt17(x.tolerance),
            ]);
        }
        for x in &sec.verdicts {
            verdict_rows.push(vec![sec.name.clone(), x.condition.clone(), x.probe.clone(), b(x.trend_ok), b(x.final_ok), b(x.pass())]);
        }
    }
    let pass = report.pass() && (!want("d") || d.d);
    let notes: Vec<&String> = report.sections.iter().flat_map(|s| &s.notes).collect();
    Ok(Executed {
        record: CommandRecord {
            name: "verify".into(),
            pass,
            verdict: verdict_text(pass),
            files: vec![],
            details: json!({
                "condition_d": { "d": d.d, "d1": d.d1, "d2": d.d2, "kappa_jump_mass": fmt17(d.kappa_jump_mass), "continuity_set": d.continuity.describe() },
                "notes": notes,
            }),
        },
        tables: vec![
            Table {
                name: "conditions",
                header: vec!["section", "condition", "n", "probe", "empirical", "target", "abs_error", "se", "tolerance"],
                rows,
            },
            Table {
                name: "condition_verdicts",
                header: vec!["section", "condition", "probe", "trend_ok", "final_ok", "pass"],
                rows: verdict_rows,
            },
        ],
    })
}

fn run_sweep(r: &Resolved) -> Result<Executed> {
    let sb = &r.config.sweep;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut pass = true;
    for (i, f) in sb.functionals.iter().enumerate() {
        let spec = SweepSpec {
            functional: f.clone(),
            n_list: sb.n_list.clone(),
            replicates: sb.replicates,
            threshold: sb.threshold,
            root_seed: child_seed(r.seed, stream::PRELIMIT, 1000 + i as u64),
            limit_horizon: sb.limit_horizon,
        };
        let res = convergence_sweep(&r.model, &r.chars, &spec)?;
        for ((n, d), se) in res.n_list.iter().zip(&res.distances).zip(&res.ses) {
            rows.push(vec![res.functional.clone(), fmt17(*n), fmt17(*d), fmt17(*se)]);
        }
        verdicts.push(vec![res.functional.clone(), fmt17(res.threshold), b(res.trend_ok), b(res.final_ok), b(res.pass())]);
        pass &= res.pass();
    }
    Ok(Executed {
        record: CommandRecord { name: "sweep".into(), pass, verdict: verdict_text(pass), files: vec![], details: json!({}) },
        tables: vec![
            Table { name: "sweep", header: vec!["functional", "n", "distance", "se"], rows },
            Table { name: "sweep_verdicts", header: vec!["functional", "threshold", "trend_ok", "final_ok", "pass"], rows: verdicts },
        ],
    })
}

fn run_probe(r: &Resolved) -> Result<Executed> {
    let pb = &r.config.probe_j;
    let spec = ProbeSpec {
        n_list: pb.n_list.clone(),
        c_list: pb.c_list.clone(),
        lo: pb.lo,
        hi: pb.hi,
        delta: pb.delta,
        replicates: pb.replicates,
        threshold: pb.threshold,
        root_seed: r.seed,
    };
    let table = j_compactness_probe(&r.model, &spec)?;
    let rows = table.cells.iter().map(|c| vec![fmt17(c.n), fmt17(c.c), fmt17(c.probability), fmt17(c.se)]).collect();
    let mut tables = vec![Table { name: "probe_j", header: vec!["n", "c", "probability", "se"], rows }];
    let mut pass = table.pass;
    let mut details = json!({ "monotone_in_c": table.monotone_in_c, "threshold": fmt17(table.threshold), "table_pass": table.pass });
    if pb.inclusion_replicates > 0 {
        let n = pb.n_list.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = pb.c_list.iter().copied().fold(f64::INFINITY, f64::min);
        let inc = stopping_inclusion(&r.model, n, c, pb.lo, pb.hi, pb.inclusion_replicates, r.seed)?;
        pass &= inc.holds();
        details["inclusion_holds"] = json!(inc.holds());
        tables.push(Table {
            name: "stopping_inclusion",
            header: vec!["n", "c", "paths", "positive", "within_c", "within_2c", "holds"],
            rows: vec![vec![
                fmt17(n),
                fmt17(c),
                inc.paths.to_string(),
                inc.positive.to_string(),
                inc.within_c.to_string(),
                inc.within_2c.to_string(),
                b(inc.holds()),
            ]],
        });
    }
    Ok(Executed { record: CommandRecord { name: "probe-j".into(), pass, verdict: verdict_text(pass), files: vec![], details }, tables })
}

fn run_risk(r: &Resolved) -> Result<Executed> {
    let rb = &r.config.risk;
    let model: &ArrayModel = rb.model.as_ref().unwrap_or(&r.model);
    let grid = level_grid(rb.horizon, rb.t_step);
    let runs = (0..rb.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(r.seed, stream::RISK, i);
            build_risk_process(model, rb.n, rb.horizon, &grid, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let first = runs[0]
        .rows
        .iter()
        .map(|x| vec![fmt17(x.t), fmt17(x.mu), fmt17(x.overshoot_term), fmt17(x.stopped_sum), fmt17(x.bound_lhs), fmt17(x.bound_rhs)])
        .collect();
    let mut summary = Vec::new();
    let mut pass = true;
    for (i, run) in runs.iter().enumerate() {
        let gap = run.rows.iter().map(|x| x.identity_gap()).fold(0.0, f64::max);
        let violations = run.rows.iter().filter(|x| !x.bound_holds()).count();
        pass &= gap <= rb.identity_tolerance && violations == 0;
        summary.push(vec![i.to_string(), fmt17(gap), violations.to_string()]);
    }
    Ok(Executed {
        record: CommandRecord {
            name: "risk".into(),
            pass,
            verdict: verdict_text(pass),
            files: vec![],
            details: json!({ "premium_rate": fmt17(runs[0].premium), "identity_tolerance": fmt17(rb.identity_tolerance) }),
        },
        tables: vec![
            Table { name: "risk", header: vec!["t", "mu", "overshoot_term", "stopped_sum", "bound_lhs", "bound_rhs"], rows: first },
            Table { name: "risk_replicates", header: vec!["replicate", "max_identity_gap", "bound_violations"], rows: summary },
        ],
    })
}

fn run_examples(r: &Resolved) -> Result<Executed> {
    let eb = &r.config.examples;
    let model: &ArrayModel = eb.model.as_ref().unwrap_or(&r.model);
    let grid = level_grid(eb.horizon, eb.t_step);
    let per: Vec<(Vec<Vec<String>>, bool)> = (0..eb.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(r.seed, stream::EXAMPLES, i);
            let run = build_example(model, eb.n, eb.horizon, &mut rng)?;
            let mut ok = true;
            let mut rows = Vec::new();
            for &t in &grid {
                let p = run.stopped_pair(t)?;
                let tau_path = run.stopping.path.eval_coord(t, 0)?;
                let at = run.triple.eval(tau_path)?;
                ok &= tau_path == p.tau && at[0] == p.stopped_max && (at[1] - p.stopped_sum).abs() <= 1e-9 * (1.0 + p.stopped_sum.abs());
                ok &= p.tau_count == p.raw_count + 1;
                rows.push(vec![
                    i.to_string(),
                    fmt17(t),
                    p.raw_count.to_string(),
                    p.raw_max.map_or_else(|| "NA".to_string(), fmt17),
                    fmt17(p.raw_sum),
                    p.tau_count.to_string(),
                    fmt17(p.tau),
                    fmt17(p.stopped_max),
                    fmt17(p.stopped_sum),
                ]);
            }
            Ok((rows, ok))
        })
        .collect::<Result<_>>()?;
    let pass = per.iter().all(|x| x.1);
    let kind = crate::applications::ExampleKind::of(&model.family);
    Ok(Executed {
        record: CommandRecord {
            name: "examples".into(),
            pass,
            verdict: if pass {
                "stopped pairs agree with the path construction".into()
            } else {
                "stopped pairs disagree with the path construction".into()
            },
            files: vec![],
            details: json!({ "kind": kind, "tau_convention": "tau_count = raw_count + 1 (first index whose partial sum exceeds t)" }),
        },
        tables: vec![Table {
            name: "examples",
            header: vec!["replicate", "t", "raw_count", "raw_max", "raw_sum", "tau_count", "tau", "stopped_max", "stopped_sum"],
            rows: per.into_iter().flat_map(|x| x.0).collect(),
        }],
    })
}

fn execute(r: &Resolved, c: Command) -> Result<Executed> {
    match c {
        Command::Verify => run_verify(r),
        Command::Sweep => run_sweep(r),
        Command::ProbeJ => run_probe(r),
        Command::Risk => run_risk(r),
        Command::Examples => run_examples(r),
    }
}

fn write_manifest(dir: &Path, r: &Resolved, complete: bool, records: &[CommandRecord], error: Option<String>) -> Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "tool": "maxsum",
        "version": env!("CARGO_PKG_VERSION"),
        "complete": complete,
        "seed": r.seed,
        "splitting_rule": SPLITTING_RULE,
        "streams": {
            "prelimit": stream::PRELIMIT, "limit": stream::LIMIT, "condition_a": stream::CONDITION_A,
            "condition_b": stream::CONDITION_B, "condition_c": stream::CONDITION_C, "probe_j": stream::PROBE_J,
            "risk": stream::RISK, "examples": stream::EXAMPLES, "conditional": stream::CONDITIONAL,
        },
        "commands": records,
        "error": error,
        "config": r.config,
        "generated_unix_seconds": stamp,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn fail(message: String) -> RunOutcome {
    RunOutcome { exit_code: EXIT_CONFIG, out_dir: None, verdicts: vec![], message }
}

/// Runs a configuration given as text.
pub fn run_text(text: &str, opts: &RunOptions) -> RunOutcome {
    let mut cfg = match RunConfig::parse(text) {
        Ok(c) => c,
        Err(e) => return fail(e.to_string()),
    };
    if let Some(s) = opts.seed {
        cfg.seed = Some(s);
    }
    if let Some(cmds) = &opts.commands {
        cfg.commands = cmds.clone();
    }
    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let dir = opts.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if let Err(e) = fs::create_dir_all(&dir) {
        return fail(format!("cannot create output directory {}: {e}", dir.display()));
    }
    let mut records = Vec::new();
    for &c in &resolved.commands {
        let outcome = execute(&resolved, c).and_then(|mut ex| {
            for t in &ex.tables {
                let f = write_table(&dir, t)?;
                ex.record.files.push(f);
            }
            Ok(ex.record)
        });
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => {
                let msg = format!("{}: {e}", c.name());
                let _ = write_manifest(&dir, &resolved, false, &records, Some(msg.clone()));
                let verdicts = records.iter().map(|r| (r.name.clone(), r.pass)).collect();
                return RunOutcome { exit_code: EXIT_CONFIG, out_dir: Some(dir), verdicts, message: msg };
            }
        }
    }
    if let Err(e) = write_manifest(&dir, &resolved, true, &records, None) {
        return RunOutcome { exit_code: EXIT_CONFIG, out_dir: Some(dir), verdicts: vec![], message: e.to_string() };
    }
    let verdicts: Vec<(String, bool)> = records.iter().map(|r| (r.name.clone(), r.pass)).collect();
    let all = verdicts.iter().all(|v| v.1);
    RunOutcome {
        exit_code: if all { EXIT_PASS } else { EXIT_VERDICT_FAIL },
        out_dir: Some(dir),
        verdicts,
        message: if all { "all verdicts pass".into() } else { "some verdicts fail".into() },
    }
}

/// Runs a configuration file.
pub fn run_path(path: &Path, opts: &RunOptions) -> RunOutcome {
    match fs::read_to_string(path) {
        Ok(text) => run_text(&text, opts),
        Err(e) => fail(Error::Config(format!("cannot read {}: {e}", path.display())).to_string()),
    }
}
