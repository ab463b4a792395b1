//! End-to-end acceptance suite: thirteen criteria, each with its tolerance and
//! wall-clock budget. One PASS/FAIL line is printed per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use maxsum::applications::build_risk_process;
use maxsum::array::TripleSample;
use maxsum::config::{build_preset, preset_config, Command};
use maxsum::diagnostics::{
    convergence_sweep, empirical_charfn, independence_probe, j_compactness_probe, stopping_inclusion, Component, Functional, ProbeSpec,
    SweepSpec,
};
use maxsum::limit::{
    identical_power_shift, Atom, Axis, AxisPiece, Density, JointJumpMeasure, LimitCharacteristics, MaxCoupling, Side, TailFunction,
};
use maxsum::runner::{run_text, RunOptions};
use maxsum::sampler::{sample_extremal, sample_hybrid, sample_levy, HybridSampleConfig};
use maxsum::seed::{child_rng, open_unit, stream};
use maxsum::{CadlagPath, CoordFlag, InverseStatus};
use num_complex::Complex64;
use rand::Rng;

const ROOT: u64 = 0x5eed_2024;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = v.pass && in_time;
    let line = format!(
        "criterion {id:>2} {name}: {} ({}; {:.1} s of {} s)\n",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    // Written to the raw handle so the line shows without --nocapture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn frechet(alpha: f64) -> TailFunction {
    TailFunction::Frechet { alpha, scale: 1.0 }
}

fn extremal_fdd() -> Verdict {
    let ch = LimitCharacteristics::new(frechet(1.0), JointJumpMeasure::empty(), 0.0, 0.0, 0.0).unwrap();
    let ts = [0.5, 1.0, 2.0];
    let us = [0.5, 1.0, 2.0, 4.0];
    let n = 20_000u64;
    let mut counts = [[0usize; 4]; 3];
    for i in 0..n {
        let mut rng = child_rng(ROOT, stream::LIMIT, i);
        let p = sample_extremal(&ch, ts[0], ts[2], &mut rng).unwrap();
        for (a, &t) in ts.iter().enumerate() {
            let x = p.eval_coord(t, 0).unwrap();
            for (b, &u) in us.iter().enumerate() {
                counts[a][b] += usize::from(x <= u);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (a, &t) in ts.iter().enumerate() {
        for (b, &u) in us.iter().enumerate() {
            let exact = ch.extremal_fdd(&[t], &[u]).unwrap();
            assert!((exact - (-t / u).exp()).abs() < 1e-15);
            worst = worst.max((counts[a][b] as f64 / n as f64 - exact).abs());
        }
    }
    verdict(worst <= 0.02, format!("sup |F̂ − F| = {worst:.4} ≤ 0.02"))
}

fn compound_poisson_gauss() -> LimitCharacteristics {
    let atoms = vec![
        Atom { u_mark: None, v: 1.0, w: 0.5, mass: 0.8 },
        Atom { u_mark: None, v: -0.7, w: 0.0, mass: 0.5 },
        Atom { u_mark: None, v: 0.0, w: 1.2, mass: 0.3 },
    ];
    LimitCharacteristics::new(TailFunction::ZeroAbove { threshold: 0.0 }, JointJumpMeasure::Atoms { atoms }, 0.2, 0.36, 0.4).unwrap()
}

const GRID9: [(f64, f64); 9] =
    [(-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0), (0.0, -1.0), (0.0, 1.0), (0.5, 0.5), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0)];

fn levy_charfn() -> Verdict {
    let ch = compound_poisson_gauss();
    let n = 50_000u64;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let mut rng = child_rng(ROOT, stream::LIMIT, 1 << 32 | i);
            let v = sample_levy(&ch, 1.0, None, &mut rng).unwrap().eval(1.0).unwrap();
            (v[0], v[1])
        })
        .collect();
    let bound = 3.0 / (n as f64).sqrt() + 0.01;
    let worst =
        GRID9.iter().map(|&(y, z)| (empirical_charfn(&pts, y, z).unwrap() - ch.levy_charfn(1.0, y, z).unwrap()).norm()).fold(0.0, f64::max);
    verdict(worst <= bound, format!("max |φ̂ − φ| = {worst:.4} ≤ {bound:.4}"))
}

fn conditional_decomposition() -> Verdict {
    let (model, chars) = build_preset("identical", &BTreeMap::new()).unwrap();
    let spec = SweepSpec {
        functional: Functional::Conditional { u: 1.0, y: 0.3, z: 0.2 },
        n_list: vec![1e2, 1e3, 1e4],
        replicates: 1,
        threshold: 0.05,
        root_seed: ROOT,
        limit_horizon: 1.0,
    };
    let r = convergence_sweep(&model, &chars, &spec).unwrap();
    let errs: Vec<String> = r.distances.iter().map(|d| format!("{d:.6}")).collect();
    verdict(r.pass(), format!("errors [{}], trend {}, final ≤ 0.05", errs.join(", "), r.trend_ok))
}

fn analytic_families() -> Vec<(&'static str, LimitCharacteristics)> {
    let power = |alpha: f64| AxisPiece {
        axis: Axis::Gamma,
        side: Side::Pos,
        density: Density::Power { alpha, weight: 1.0 },
        lo: 0.0,
        hi: f64::INFINITY,
    };
    let identical = |alpha: f64| {
        LimitCharacteristics::new(
            frechet(alpha),
            JointJumpMeasure::Analytic { pieces: vec![power(alpha)], coupling: MaxCoupling::Identical },
            identical_power_shift(alpha),
            0.0,
            1.0,
        )
        .unwrap()
    };
    let two_sided = LimitCharacteristics::new(
        TailFunction::ExponentialFloor { mass: 0.8, rate: 1.5, floor: 0.0 },
        JointJumpMeasure::Analytic {
            pieces: vec![
                AxisPiece {
                    axis: Axis::Gamma,
                    side: Side::Pos,
                    density: Density::Exponential { mass: 0.8, rate: 1.5 },
                    lo: 0.0,
                    hi: f64::INFINITY,
                },
                AxisPiece {
                    axis: Axis::Gamma,
                    side: Side::Neg,
                    density: Density::Power { alpha: 1.3, weight: 0.4 },
                    lo: 0.0,
                    hi: f64::INFINITY,
                },
                AxisPiece {
                    axis: Axis::Kappa,
                    side: Side::Pos,
                    density: Density::Exponential { mass: 1.0, rate: 2.0 },
                    lo: 0.0,
                    hi: f64::INFINITY,
                },
            ],
            coupling: MaxCoupling::Identical,
        },
        0.3,
        0.2,
        0.5,
    )
    .unwrap();
    vec![("identical power 1.5", identical(1.5)), ("identical power 1.2", identical(1.2)), ("two-sided mixed", two_sided)]
}

fn constant_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for (_, ch) in analytic_families() {
        for u in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let direct = ch.exceedance_decomposition(u).unwrap().a_u;
            for v in [0.1, 0.5, 1.0, 3.0, 10.0] {
                let chain = ch.a_u_via_truncation(u, v).unwrap();
                worst = worst.max((direct - chain).abs());
                checks += 1;
            }
        }
    }
    verdict(worst <= 1e-8, format!("{checks} (family, u, v) cells, max gap {worst:.2e} ≤ 1e-8"))
}

fn mixed_atoms() -> LimitCharacteristics {
    let atoms = vec![
        Atom { u_mark: Some(0.5), v: 1.0, w: 0.5, mass: 0.7 },
        Atom { u_mark: Some(2.0), v: -0.5, w: 1.5, mass: 0.3 },
        Atom { u_mark: None, v: 0.3, w: 0.0, mass: 1.1 },
        Atom { u_mark: Some(1.0), v: 0.0, w: 0.0, mass: 0.4 },
        Atom { u_mark: Some(1.5), v: 1.0, w: 0.5, mass: 0.25 },
        Atom { u_mark: None, v: -0.5, w: 1.5, mass: 0.6 },
    ];
    let tail = TailFunction::from_marks(0.0, &[(0.5, 0.7), (2.0, 0.3), (1.0, 0.4), (1.5, 0.25)]);
    LimitCharacteristics::new(tail, JointJumpMeasure::Atoms { atoms }, 0.2, 0.5, 0.3).unwrap()
}

fn atoms(m: &JointJumpMeasure) -> Vec<Atom> {
    match m {
        JointJumpMeasure::Atoms { atoms } => atoms.clone(),
        JointJumpMeasure::Analytic { .. } => panic!("atom measure expected"),
    }
}

fn measure_bounds() -> Verdict {
    let ch = mixed_atoms();
    let all = atoms(&ch.jumps);
    let mut locations: Vec<(f64, f64)> = all.iter().map(|a| (a.v, a.w)).collect();
    locations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    locations.dedup();
    let mass_in = |m: &[Atom], set: u32| -> f64 {
        m.iter().filter(|a| locations.iter().position(|&l| l == (a.v, a.w)).is_some_and(|k| set >> k & 1 == 1)).map(|a| a.mass).sum()
    };
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0];
    let mut worst = f64::NEG_INFINITY;
    let mut cells = 0usize;
    for (i, &u1) in grid.iter().enumerate() {
        for &u2 in &grid[i..] {
            let p1 = atoms(&ch.exceedance_decomposition(u1).unwrap().pi_u);
            let p2 = atoms(&ch.exceedance_decomposition(u2).unwrap().pi_u);
            for set in 0..1u32 << locations.len() {
                let diff = mass_in(&p1, set) - mass_in(&p2, set);
                let cap = (ch.pi1(u1) - ch.pi1(u2)).min(mass_in(&all, set));
                worst = worst.max(diff - cap).max(-diff);
                cells += 1;
            }
        }
    }
    verdict(worst <= 1e-10, format!("{cells} (A, u₁, u₂) cells, worst violation {worst:.2e} ≤ 1e-10"))
}

fn hybrid_kernel() -> Verdict {
    let ch = mixed_atoms();
    let cfg = HybridSampleConfig::new(ch.clone(), 1.0);
    let n = 50_000u64;
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let mut rng = child_rng(ROOT, stream::LIMIT, 2 << 32 | i);
            let v = sample_hybrid(&cfg, &mut rng).unwrap().eval(1.0).unwrap();
            (v[0], v[1], v[2])
        })
        .collect();
    let bound = 3.0 / (n as f64).sqrt() + 0.01;
    let mut worst: f64 = 0.0;
    for u in [0.7, 1.2, 2.5] {
        for &(y, z) in &GRID9 {
            let emp: Complex64 =
                rows.iter().filter(|r| r.0 <= u).map(|r| Complex64::new(0.0, y * r.1 + z * r.2).exp()).sum::<Complex64>() / n as f64;
            let exact = ch.hybrid_kernel(ch.u_pi(), u, 1.0, y, z).unwrap();
            worst = worst.max((emp - exact).norm());
        }
    }
    verdict(worst <= bound, format!("27 cells, max error {worst:.4} ≤ {bound:.4}"))
}

/// `sup{s : x(s) ≤ t}` over a grid holding every jump time, a point just
/// before each, and 20 001 equispaced points.
fn grid_inverse(p: &CadlagPath, t: f64) -> Option<f64> {
    let h = p.horizon();
    let mut grid: Vec<f64> = (0..=20_000).map(|i| h * i as f64 / 20_000.0).collect();
    for &s in p.jump_times() {
        grid.extend([s, s - 1e-9]);
    }
    grid.into_iter().filter(|&s| (0.0..=h).contains(&s) && p.eval_coord(s, 0).unwrap() <= t).reduce(f64::max)
}

fn renewal_inverse() -> Verdict {
    let mut failures = 0usize;
    let paths = 1000u64;
    for i in 0..paths {
        let mut rng = child_rng(ROOT, stream::PRELIMIT, 3 << 32 | i);
        let h = 4.0;
        let m = rng.random_range(0..25);
        let mut times: Vec<f64> = (0..m).map(|_| h * open_unit(&mut rng)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let sizes: Vec<f64> = times.iter().map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
        let drift = if i % 2 == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
        let x0 = rng.random_range(-1.0..1.0);
        let p = CadlagPath::from_jumps(vec![x0], vec![drift], h, vec![CoordFlag::Nondecreasing], times, sizes).unwrap();
        let top = p.eval_coord(h, 0).unwrap();
        let spacing = h / 20_000.0;
        for _ in 0..20 {
            let t = rng.random_range(x0 - 0.3..top + 0.3);
            let inv = p.generalized_inverse(t, 0).unwrap();
            let ok = match grid_inverse(&p, t) {
                None => inv.status == InverseStatus::EmptyLevelSet && inv.time == 0.0,
                Some(g) if g == h => inv.status == InverseStatus::Truncated && inv.time == h,
                Some(g) => {
                    inv.status == InverseStatus::Interior
                        && (inv.time - g).abs() <= spacing
                        // sublevel before τ, exceedance right after
                        && (inv.time <= 1e-9 || p.eval_coord(inv.time - 1e-9, 0).unwrap() <= t)
                        && p.eval_coord((inv.time + 1e-9).min(h), 0).unwrap() > t
                }
            };
            failures += usize::from(!ok);
        }
    }
    verdict(failures == 0, format!("{} paths × 20 levels, {failures} failures", paths))
}

fn risk_identities() -> Verdict {
    let (model, _) = build_preset("risk", &BTreeMap::new()).unwrap();
    let t_grid: Vec<f64> = (1..=40).map(|k| k as f64 * 0.05).collect();
    let (mut worst, mut bound_fail, mut rows) = (0.0f64, 0usize, 0usize);
    for i in 0..1000u64 {
        let mut rng = child_rng(ROOT, stream::RISK, i);
        let run = build_risk_process(&model, 100.0, 2.0, &t_grid, &mut rng).unwrap();
        for r in &run.rows {
            worst = worst.max(r.identity_gap());
            bound_fail += usize::from(!r.bound_holds());
            rows += 1;
        }
    }
    verdict(worst <= 1e-12 && bound_fail == 0, format!("{rows} rows, identity gap {worst:.1e} ≤ 1e-12, {bound_fail} bound violations"))
}

fn identical_identity() -> Verdict {
    let (model, chars) = build_preset("identical", &BTreeMap::new()).unwrap();
    let n = 1000.0;
    let mut prelimit_fail = 0usize;
    for i in 0..1000u64 {
        let mut rng = child_rng(ROOT, stream::PRELIMIT, 4 << 32 | i);
        let p = model.build_prelimit(n, 2.0, &mut rng).unwrap();
        for k in (1..=2000).step_by(7) {
            let t = k as f64 / n;
            prelimit_fail += usize::from(p.eval_coord(t, 0).unwrap() != p.max_jump(t, 1).unwrap());
        }
    }
    // Limit side: the identical power measure restricted to jumps above 0.2,
    // started from that level so the mark rate is finite.
    let pieces = vec![AxisPiece {
        axis: Axis::Gamma,
        side: Side::Pos,
        density: Density::Power { alpha: 1.5, weight: 1.0 },
        lo: 0.2,
        hi: f64::INFINITY,
    }];
    let restricted = LimitCharacteristics::new(
        chars.tail.clone(),
        JointJumpMeasure::Analytic { pieces, coupling: MaxCoupling::Identical },
        0.0,
        0.0,
        1.0,
    )
    .unwrap();
    let mut cfg = HybridSampleConfig::new(restricted, 2.0);
    cfg.initial_max = Some(0.2);
    let mut limit_fail = 0usize;
    for i in 0..1000u64 {
        let mut rng = child_rng(ROOT, stream::LIMIT, 4 << 32 | i);
        let p = sample_hybrid(&cfg, &mut rng).unwrap();
        for k in 1..=200 {
            let t = k as f64 * 0.01;
            limit_fail += usize::from(p.path.eval_coord(t, 0).unwrap() != p.path.max_jump(t, 1).unwrap().max(0.2));
        }
    }
    verdict(prelimit_fail == 0 && limit_fail == 0, format!("prelimit mismatches {prelimit_fail}, limit mismatches {limit_fail}"))
}

fn stopped_convergence() -> Verdict {
    let (model, chars) = build_preset("example2_insurance", &BTreeMap::new()).unwrap();
    let spec = SweepSpec {
        functional: Functional::Stopped { component: Component::Xi, t: 1.0 },
        n_list: vec![1e2, 1e3, 1e4],
        replicates: 10_000,
        threshold: 0.03,
        root_seed: ROOT,
        limit_horizon: 2.0,
    };
    let r = convergence_sweep(&model, &chars, &spec).unwrap();
    let ds: Vec<String> = r.distances.iter().zip(&r.ses).map(|(d, s)| format!("{d:.4}±{s:.4}")).collect();
    verdict(r.pass(), format!("KS [{}], trend {}, final ≤ 0.03", ds.join(", "), r.trend_ok))
}

fn j_compactness() -> Verdict {
    let (model, _) = build_preset("example2_insurance", &BTreeMap::new()).unwrap();
    let inc = stopping_inclusion(&model, 1e4, 0.01, 0.5, 2.0, 1000, ROOT).unwrap();
    let probe = ProbeSpec {
        n_list: vec![1e4],
        c_list: vec![0.01],
        lo: 0.5,
        hi: 2.0,
        delta: 0.1,
        replicates: 1000,
        threshold: 0.05,
        root_seed: ROOT,
    };
    let table = j_compactness_probe(&model, &probe).unwrap();
    let p = table.cells[0].probability;
    verdict(
        inc.holds() && table.pass,
        format!(
            "inclusion {}/{} (θ ≤ c), {}/{} (θ < 2c) of {} paths; P{{Δ_J ≥ 0.1}} = {p:.3} ≤ 0.05",
            inc.within_c, inc.positive, inc.within_2c, inc.positive, inc.paths
        ),
    )
}

fn independence() -> Verdict {
    let (_, chars) = build_preset("independence", &BTreeMap::new()).unwrap();
    assert!(chars.is_factorized());
    let alpha = match chars.tail {
        TailFunction::Frechet { alpha, .. } => alpha,
        ref other => panic!("unexpected tail {other:?}"),
    };
    // Product structure: the max is drawn apart from the sum pair.
    let n = 50_000u64;
    let samples: Vec<TripleSample> = (0..n)
        .map(|i| {
            let mut rng = child_rng(ROOT, stream::LIMIT, 5 << 32 | i);
            let xi = sample_extremal(&chars, 1.0, 1.0, &mut rng).unwrap().eval_coord(1.0, 0).unwrap();
            let v = sample_levy(&chars, 1.0, None, &mut rng).unwrap().eval(1.0).unwrap();
            TripleSample { xi, gamma: v[0], kappa: v[1] }
        })
        .collect();
    let m = std::f64::consts::LN_2.powf(-1.0 / alpha);
    let d = independence_probe(&samples, m).unwrap();
    let g = d.gamma.value.unwrap();
    verdict(g.abs() <= 0.02, format!("level {m:.4} (median), exceed fraction {:.3}, corr {g:+.4}", d.exceed_fraction))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Verdict {
    let mut cfg = preset_config("example2_insurance", 424_242);
    cfg.commands = vec![Command::Verify, Command::Sweep, Command::ProbeJ, Command::Risk, Command::Examples];
    cfg.verify.samples_per_n = 2000;
    cfg.verify.n_list = vec![1e2, 1e3];
    cfg.sweep.n_list = vec![1e2, 1e3];
    cfg.sweep.replicates = 300;
    cfg.sweep.threshold = 0.1;
    cfg.probe_j.n_list = vec![1e2, 1e3];
    cfg.probe_j.replicates = 100;
    cfg.probe_j.inclusion_replicates = 100;
    cfg.risk.model = Some(build_preset("risk", &BTreeMap::new()).unwrap().0);
    cfg.risk.replicates = 50;
    cfg.examples.replicates = 20;
    let text = cfg.to_toml().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|d| {
            let opts = RunOptions { out: Some(tmp.path().join(d)), ..RunOptions::default() };
            run_text(&text, &opts)
        })
        .collect();
    let codes: Vec<i32> = outs.iter().map(|o| o.exit_code).collect();
    let failing: Vec<&str> = outs[0].verdicts.iter().filter(|v| !v.1).map(|v| v.0.as_str()).collect();
    let a = csv_files(&tmp.path().join("a"));
    let b = csv_files(&tmp.path().join("b"));
    let same = !a.is_empty() && a == b;
    verdict(
        same && codes[0] != 2,
        format!("{} CSV files byte-identical: {same}; exit codes {codes:?}, failing verdicts {failing:?}", a.len()),
    )
}

#[test]
fn acceptance() {
    let results = [
        run(1, "extremal fdd", secs(10), extremal_fdd),
        run(2, "Lévy characteristic function", secs(30), levy_charfn),
        run(3, "conditional decomposition", secs(60), conditional_decomposition),
        run(4, "constant identity", secs(5), constant_identity),
        run(5, "measure bounds", secs(1), measure_bounds),
        run(6, "hybrid kernel", secs(60), hybrid_kernel),
        run(7, "renewal stopping contract", secs(10), renewal_inverse),
        run(8, "risk identities", secs(20), risk_identities),
        run(9, "identical-components identity", secs(10), identical_identity),
        run(10, "stopped-process convergence", secs(120), stopped_convergence),
        run(11, "J-compactness", secs(60), j_compactness),
        run(12, "independence", secs(30), independence),
        run(13, "determinism", secs(600), determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &ok)| !ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
