//! Distances, empirical transforms, `n`-sweeps against limit populations,
//! J-modulus probes and the independence probe.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{build_stopping, ArrayModel, TripleSample};
use crate::error::{domain, Error, Result};
use crate::limit::LimitCharacteristics;
use crate::path::{modulus_j_at_least, CadlagPath};
use crate::sampler::{sample_hybrid, sample_levy, sample_stopped_limit, HybridSampleConfig};
use crate::seed::{child_rng, stream, SimRng};

/// Standard deviation of `√N · D` under the null, asymptotically.
pub const KS_SD: f64 = 0.2603;

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return domain("sample is empty");
    }
    if xs.iter().any(|x| x.is_nan()) {
        return domain("sample contains NaN");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Distance between an empirical CDF and a continuous CDF.
pub fn ks_distance_cdf(a: &[f64], cdf: &dyn Fn(f64) -> f64) -> Result<f64> {
    let a = sorted(a)?;
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < a.len() {
        let x = a[i];
        let lo = i as f64 / n;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        let f = cdf(x);
        d = d.max((f - lo).abs()).max((i as f64 / n - f).abs());
    }
    Ok(d)
}

/// Mean of `exp(i(yγ + zκ))`.
pub fn empirical_charfn(samples: &[(f64, f64)], y: f64, z: f64) -> Result<Complex64> {
    if samples.is_empty() {
        return domain("sample is empty");
    }
    let sum: Complex64 = samples.iter().map(|&(g, k)| Complex64::new(0.0, y * g + z * k).exp()).sum();
    Ok(sum / samples.len() as f64)
}

/// Scalar extracted from a triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Xi,
    Gamma,
    Kappa,
    /// `γ − ξ`.
    Difference,
}

impl Component {
    pub fn of(self, t: &TripleSample) -> f64 {
        match self {
            Component::Xi => t.xi,
            Component::Gamma => t.gamma,
            Component::Kappa => t.kappa,
            Component::Difference => t.gamma - t.xi,
        }
    }
}

/// What a sweep compares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum Functional {
    /// One component of `ζ_n(t)`.
    Marginal { component: Component, t: f64 },
    /// One component of `ζ_n(τ_n(t))`.
    Stopped { component: Component, t: f64 },
    /// Sup error of the joint characteristic function of `(γ_n(t), κ_n(t))`.
    CharGrid { t: f64, points: Vec<(f64, f64)> },
    /// `|E[e^{i(yγ+zκ)} χ(ξ ≤ u)]^n − e^{−π₁(u)} φ^{(u)}(1, y, z)|` by quadrature.
    Conditional { u: f64, y: f64, z: f64 },
}

impl Functional {
    pub fn label(&self) -> String {
        match self {
            Functional::Marginal { component, t } => format!("marginal {component:?} at t={t}"),
            Functional::Stopped { component, t } => format!("stopped {component:?} at t={t}"),
            Functional::CharGrid { t, points } => format!("charfn grid ({} points) at t={t}", points.len()),
            Functional::Conditional { u, y, z } => format!("conditional decomposition u={u} y={y} z={z}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub functional: String,
    pub n_list: Vec<f64>,
    pub distances: Vec<f64>,
    pub ses: Vec<f64>,
    pub threshold: f64,
    pub trend_ok: bool,
    pub final_ok: bool,
}

impl SweepResult {
    fn from_parts(functional: String, n_list: Vec<f64>, distances: Vec<f64>, ses: Vec<f64>, threshold: f64) -> Self {
        let trend_ok = distances.windows(2).zip(ses.windows(2)).all(|(d, s)| d[1] <= d[0] + 2.0 * (s[0] + s[1]) + 1e-12);
        let final_ok = distances.last().is_some_and(|&d| d <= threshold);
        Self { functional, n_list, distances, ses, threshold, trend_ok, final_ok }
    }

    pub fn pass(&self) -> bool {
        self.trend_ok && self.final_ok
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub functional: Functional,
    pub n_list: Vec<f64>,
    pub replicates: usize,
    pub threshold: f64,
    pub root_seed: u64,
    /// Initial horizon for limit paths; extended as needed when stopping.
    pub limit_horizon: f64,
}

fn parallel<T: Send, F: Fn(&mut SimRng) -> Result<T> + Sync>(seed: u64, stream_id: u64, offset: u64, count: usize, f: F) -> Result<Vec<T>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, stream_id, offset + i);
            f(&mut rng)
        })
        .collect()
}

fn limit_component_population(
    spec: &SweepSpec,
    chars: &LimitCharacteristics,
    stopped: bool,
    component: Component,
    t: f64,
) -> Result<Vec<f64>> {
    let cfg = HybridSampleConfig::new(chars.clone(), spec.limit_horizon.max(t));
    if stopped {
        return parallel(spec.root_seed, stream::LIMIT, 0, spec.replicates, |rng| {
            let r = sample_stopped_limit(&cfg, &[t], rng)?[0];
            Ok(component.of(&TripleSample { xi: r.xi, gamma: r.gamma, kappa: r.kappa }))
        });
    }
    match component {
        Component::Gamma | Component::Kappa => parallel(spec.root_seed, stream::LIMIT, 0, spec.replicates, |rng| {
            let p = sample_levy(chars, cfg.horizon, None, rng)?;
            let v = p.eval(t)?;
            Ok(if component == Component::Gamma { v[0] } else { v[1] })
        }),
        Component::Xi | Component::Difference => parallel(spec.root_seed, stream::LIMIT, 0, spec.replicates, |rng| {
            let p = sample_hybrid(&cfg, rng)?;
            let v = p.eval(t)?;
            Ok(component.of(&TripleSample { xi: v[0], gamma: v[1], kappa: v[2] }))
        }),
    }
}

/// `n`-sweep of a functional against its limit.
pub fn convergence_sweep(model: &ArrayModel, chars: &LimitCharacteristics, spec: &SweepSpec) -> Result<SweepResult> {
    if spec.n_list.is_empty() || spec.replicates == 0 {
        return domain("sweep needs n values and replicates");
    }
    let mut n_list = spec.n_list.clone();
    n_list.sort_by(f64::total_cmp);
    let label = spec.functional.label();
    let nrep = spec.replicates as f64;
    let mut distances = Vec::new();
    let mut ses = Vec::new();
    match &spec.functional {
        Functional::Conditional { u, y, z } => {
            let target = chars.conditional_charfn(*u, 1.0, *y, *z)? * (-chars.pi1(*u)).exp();
            for &n in &n_list {
                let v = model
                    .single_term_power(n, *u, *y, *z)
                    .ok_or_else(|| Error::Contract("model has no single-term quadrature".into()))??;
                distances.push((v - target).norm());
                ses.push(0.0);
            }
        }
        Functional::CharGrid { t, points } => {
            for (i, &n) in n_list.iter().enumerate() {
                let pairs = parallel(spec.root_seed, stream::PRELIMIT, (i as u64) << 32, spec.replicates, |rng| {
                    let p = model.build_prelimit(n, *t, rng)?;
                    let v = p.eval(*t)?;
                    Ok((v[1], v[2]))
                })?;
                let mut sup: f64 = 0.0;
                for &(y, z) in points {
                    sup = sup.max((empirical_charfn(&pairs, y, z)? - chars.levy_charfn(*t, y, z)?).norm());
                }
                distances.push(sup);
                ses.push(1.0 / nrep.sqrt());
            }
        }
        Functional::Marginal { component, t } | Functional::Stopped { component, t } => {
            let stopped = matches!(spec.functional, Functional::Stopped { .. });
            if stopped {
                let cd = chars.classify_condition_d();
                if !cd.continuity.contains(*t) {
                    return domain(format!(
                        "t = {t} lies outside the continuity set V ({}) of the stopping limit",
                        cd.continuity.describe()
                    ));
                }
            }
            let analytic_xi = *component == Component::Xi && !stopped;
            let limit = if analytic_xi { Vec::new() } else { limit_component_population(spec, chars, stopped, *component, *t)? };
            for (i, &n) in n_list.iter().enumerate() {
                let sample = parallel(spec.root_seed, stream::PRELIMIT, (i as u64) << 32, spec.replicates, |rng| {
                    let tr = if stopped {
                        model.stopped_triples(n, &[*t], rng)?[0]
                    } else {
                        let p = model.build_prelimit(n, *t, rng)?;
                        let v = p.eval(*t)?;
                        TripleSample { xi: v[0], gamma: v[1], kappa: v[2] }
                    };
                    Ok(component.of(&tr))
                })?;
                if analytic_xi {
                    distances.push(ks_distance_cdf(&sample, &|u| chars.extremal_fdd(&[*t], &[u]).unwrap_or(0.0))?);
                    ses.push(KS_SD / nrep.sqrt());
                } else {
                    distances.push(ks_distance(&sample, &limit)?);
                    ses.push(KS_SD * (2.0 / nrep).sqrt());
                }
            }
        }
    }
    Ok(SweepResult::from_parts(label, n_list, distances, ses, spec.threshold))
}

#[derive(Clone, Debug)]
pub struct ProbeSpec {
    pub n_list: Vec<f64>,
    pub c_list: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub replicates: usize,
    pub threshold: f64,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeCell {
    pub n: f64,
    pub c: f64,
    pub probability: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JProbeTable {
    pub cells: Vec<ProbeCell>,
    /// Every row nondecreasing in `c`.
    pub monotone_in_c: bool,
    pub threshold: f64,
    pub pass: bool,
}

/// Empirical `P{Δ_J(ζ_n, c, T, T′) ≥ δ}` over an `(n, c)` grid. Each path
/// is evaluated at every `c`, so rows are monotone pathwise.
pub fn j_compactness_probe(model: &ArrayModel, spec: &ProbeSpec) -> Result<JProbeTable> {
    if !(spec.lo > 0.0 && spec.lo < spec.hi) {
        return domain("need 0 < T < T′");
    }
    if spec.c_list.is_empty() || spec.n_list.is_empty() || spec.replicates == 0 {
        return domain("probe grids must be nonempty");
    }
    let mut c_list = spec.c_list.clone();
    c_list.sort_by(f64::total_cmp);
    let mut n_list = spec.n_list.clone();
    n_list.sort_by(f64::total_cmp);
    let mut cells = Vec::new();
    let mut monotone = true;
    for (i, &n) in n_list.iter().enumerate() {
        let hits: Vec<Vec<bool>> = parallel(spec.root_seed, stream::PROBE_J, (i as u64) << 32, spec.replicates, |rng| {
            let p = model.build_prelimit(n, spec.hi, rng)?;
            // Δ_J is nondecreasing in c, so the first hit settles every larger c.
            let mut row = Vec::with_capacity(c_list.len());
            let mut hit = false;
            for &c in &c_list {
                hit = hit || modulus_j_at_least(&p, c, spec.lo, spec.hi, &[0, 1, 2], spec.delta)?;
                row.push(hit);
            }
            Ok(row)
        })?;
        let m = spec.replicates as f64;
        let mut prev = 0.0;
        for (k, &c) in c_list.iter().enumerate() {
            let p = hits.iter().filter(|h| h[k]).count() as f64 / m;
            monotone &= p >= prev;
            prev = p;
            cells.push(ProbeCell { n, c, probability: p, se: (p * (1.0 - p) / m).sqrt() });
        }
    }
    let n_max = *n_list.last().expect("nonempty");
    let c_min = c_list[0];
    let pass = cells.iter().find(|x| x.n == n_max && x.c == c_min).is_some_and(|x| x.probability <= spec.threshold);
    Ok(JProbeTable { cells, monotone_in_c: monotone, threshold: spec.threshold, pass })
}

/// Counts for the pathwise relation between `Δ_J` of a stopping path and
/// the minimal jump gap `θ` of that path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingInclusion {
    pub paths: usize,
    /// Paths with `Δ_J(τ, c) > 0`.
    pub positive: usize,
    /// Of those, paths with `θ ≤ c`.
    pub within_c: usize,
    /// Of those, paths with `θ < 2c`.
    pub within_2c: usize,
}

impl StoppingInclusion {
    pub fn holds(&self) -> bool {
        self.within_c == self.positive
    }
}

/// Checks `{Δ_J(τ_n, c, T, T′) > 0} ⊆ {θ_n[T, T′] ≤ c}` on simulated stopping paths.
pub fn stopping_inclusion(
    model: &ArrayModel,
    n: f64,
    c: f64,
    lo: f64,
    hi: f64,
    replicates: usize,
    root_seed: u64,
) -> Result<StoppingInclusion> {
    let rows: Vec<(bool, f64)> = parallel(root_seed, stream::PROBE_J, 1 << 40, replicates, |rng| {
        let p = model.build_prelimit_covering(n, hi, rng)?;
        let tau = build_stopping(&p, hi, 2)?;
        inclusion_row(&tau.path, c, lo, hi)
    })?;
    let positive: Vec<&(bool, f64)> = rows.iter().filter(|r| r.0).collect();
    Ok(StoppingInclusion {
        paths: replicates,
        positive: positive.len(),
        within_c: positive.iter().filter(|r| r.1 <= c).count(),
        within_2c: positive.iter().filter(|r| r.1 < 2.0 * c).count(),
    })
}

/// `(Δ_J(path, c) > 0, θ)` on `[lo, hi]`.
pub fn inclusion_row(path: &CadlagPath, c: f64, lo: f64, hi: f64) -> Result<(bool, f64)> {
    Ok((modulus_j_at_least(path, c, lo, hi, &[0], f64::MIN_POSITIVE)?, path.min_jump_gap(lo, hi)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub value: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceDiagnostics {
    pub level: f64,
    pub exceed_fraction: f64,
    pub gamma: Correlation,
    pub kappa: Correlation,
    pub warning: Option<String>,
}

fn corr(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Correlation { value: None, se: None };
    }
    if syy == 0.0 {
        return Correlation { value: Some(0.0), se: Some(0.0) };
    }
    let r = sxy / (sxx * syy).sqrt();
    Correlation { value: Some(r), se: Some((1.0 - r * r) / (n - 1.0).max(1.0).sqrt()) }
}

/// Correlation of `χ(ξ > m)` with each sum component.
pub fn independence_probe(samples: &[TripleSample], level: f64) -> Result<IndependenceDiagnostics> {
    if samples.is_empty() {
        return domain("sample is empty");
    }
    let ind: Vec<f64> = samples.iter().map(|t| f64::from(u8::from(t.xi > level))).collect();
    let frac = ind.iter().sum::<f64>() / ind.len() as f64;
    let g: Vec<f64> = samples.iter().map(|t| t.gamma).collect();
    let k: Vec<f64> = samples.iter().map(|t| t.kappa).collect();
    let warning = (frac == 0.0 || frac == 1.0).then(|| format!("indicator of ξ > {level} is degenerate; correlations are NA"));
    Ok(IndependenceDiagnostics { level, exceed_fraction: frac, gamma: corr(&ind, &g), kappa: corr(&ind, &k), warning })
}

/// Median of a sample (lower middle for even sizes).
pub fn median(xs: &[f64]) -> Result<f64> {
    let v = sorted(xs)?;
    Ok(v[(v.len() - 1) / 2])
}
