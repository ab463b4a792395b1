//! Worked constructions: the three example wirings, the risk reserve
//! process, transformed stopped functionals and alternative stopping schemes.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{assemble, build_stopping, truncate_max, ArrayModel, Family, StoppingPath, TripleSample};
use crate::error::{contract, domain, Error, Result};
use crate::path::{compose, CadlagPath, CoordFlag, Inverse, InverseStatus};
use crate::seed::{child_rng, stream, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    /// `ξ = γ = κ = X`.
    RenewalSelf,
    /// `ξ = γ = Y`, `κ = X`.
    InsurancePair,
    /// `ξ = Y`, `γ = Z`, `κ = X`.
    EarthquakeTriple,
}

impl ExampleKind {
    pub fn of(family: &Family) -> Option<Self> {
        match family {
            Family::Renewal { .. } => Some(Self::RenewalSelf),
            Family::InsurancePair { .. } => Some(Self::InsurancePair),
            Family::Earthquake { .. } => Some(Self::EarthquakeTriple),
            _ => None,
        }
    }
}

/// Stopped values at one level `t` under both counting conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StoppedPair {
    pub t: f64,
    /// `N(t) = #{k ≥ 1 : κ_1 + … + κ_k ≤ t}`.
    pub raw_count: usize,
    /// `max_{k ≤ N(t)} ξ_k`, `None` when `N(t) = 0`.
    pub raw_max: Option<f64>,
    pub raw_sum: f64,
    /// `n τ(t) = N(t) + 1`, the first index whose partial sum exceeds `t`.
    pub tau_count: usize,
    pub tau: f64,
    pub stopped_max: f64,
    pub stopped_sum: f64,
}

#[derive(Clone, Debug)]
pub struct ExampleRun {
    pub kind: ExampleKind,
    pub n: f64,
    pub draws: Vec<TripleSample>,
    pub triple: CadlagPath,
    pub stopping: StoppingPath,
}

impl ExampleRun {
    pub fn stopped_pair(&self, t: f64) -> Result<StoppedPair> {
        if !(t >= 0.0 && t <= self.stopping.path.horizon()) {
            return domain(format!("level {t} outside [0, {}]", self.stopping.path.horizon()));
        }
        let (mut s, mut raw_count) = (0.0, 0);
        for d in &self.draws {
            s += d.kappa;
            if s > t {
                break;
            }
            raw_count += 1;
        }
        let tau_count = raw_count + 1;
        if tau_count > self.draws.len() {
            return Err(Error::Capacity(format!("draws do not cover level {t}")));
        }
        let head = &self.draws[..raw_count];
        let raw_max = head.iter().map(|d| d.xi).reduce(f64::max);
        let raw_sum = head.iter().map(|d| d.gamma).sum();
        let full = &self.draws[..tau_count];
        Ok(StoppedPair {
            t,
            raw_count,
            raw_max,
            raw_sum,
            tau_count,
            tau: tau_count as f64 / self.n,
            stopped_max: full.iter().map(|d| d.xi).fold(f64::NEG_INFINITY, f64::max),
            stopped_sum: full.iter().map(|d| d.gamma).sum(),
        })
    }
}

/// Builds an example triple covering `[0, horizon]` in κ-level together
/// with its stopping path.
pub fn build_example(model: &ArrayModel, n: f64, horizon: f64, rng: &mut SimRng) -> Result<ExampleRun> {
    model.validate()?;
    let kind = ExampleKind::of(&model.family).ok_or_else(|| Error::Domain("model is not one of the example wirings".into()))?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain("horizon must be positive");
    }
    let draws = model.draw_covering(n, horizon, rng)?;
    let triple = assemble(draws[0].xi, &draws, n, draws.len() as f64 / n)?;
    let stopping = build_stopping(&triple, horizon, 2)?;
    if stopping.truncated {
        return Err(Error::Capacity("stopping path truncated".into()));
    }
    Ok(ExampleRun { kind, n, draws, triple, stopping })
}

/// One grid row of a risk run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiskRow {
    pub t: f64,
    /// `c t − β(τ(t))`.
    pub mu: f64,
    /// `c (t − κ(τ(t)))`.
    pub overshoot_term: f64,
    /// `γ(τ(t)) = Σ (c κ_k − β_k)`.
    pub stopped_sum: f64,
    /// `overshoot_term + stopped_sum`.
    pub decomposed: f64,
    pub bound_lhs: f64,
    /// `ξ(τ(t)) = max c κ_k`.
    pub bound_rhs: f64,
}

impl RiskRow {
    pub fn identity_gap(&self) -> f64 {
        (self.mu - self.decomposed).abs()
    }

    pub fn bound_holds(&self) -> bool {
        self.bound_lhs <= self.bound_rhs
    }
}

#[derive(Clone, Debug)]
pub struct RiskRun {
    pub premium: f64,
    /// `μ(t)` on `[0, horizon]`: drift `c`, downward jumps at κ partial sums.
    pub mu: CadlagPath,
    pub rows: Vec<RiskRow>,
}

/// Risk reserve process `μ(t) = c t − β(τ(t))` and its representation
/// `c (t − κ(τ(t))) + γ(τ(t))` on a level grid.
///
/// The κ marks entering `ξ` are the floating-point increments of the κ
/// partial sums, which makes the overshoot bound exact in floating point.
pub fn build_risk_process(model: &ArrayModel, n: f64, horizon: f64, t_grid: &[f64], rng: &mut SimRng) -> Result<RiskRun> {
    model.validate()?;
    let c = model.premium_rate(n).ok_or_else(|| Error::Domain("model is not a risk family".into()))?;
    if !(c >= 0.0 && c.is_finite()) {
        return domain("premium rate must be finite and nonnegative");
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain("horizon must be positive");
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && *t <= horizon)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return domain("grid must be ascending inside [0, horizon]");
    }
    let draws = model.draw_risk_covering(n, horizon, rng)?;
    let m = draws.len();
    let mut sums = Vec::with_capacity(m + 1);
    sums.push(0.0);
    for &(k, _) in &draws {
        sums.push(sums.last().copied().unwrap_or(0.0) + k);
    }
    let marks: Vec<f64> = (1..=m).map(|k| sums[k] - sums[k - 1]).collect();

    // μ(t) jumps by −β_{k+1} when the partial sum S_k is reached.
    let mut times: Vec<f64> = Vec::new();
    let mut sizes: Vec<f64> = Vec::new();
    let mut start = 0;
    while start < m && sums[start + 1] <= 0.0 {
        start += 1;
    }
    let initial: f64 = -draws[..=start].iter().map(|d| d.1).sum::<f64>();
    for k in start + 1..m {
        let s = sums[k];
        if s > horizon {
            break;
        }
        match times.last() {
            Some(&last) if last == s => *sizes.last_mut().expect("paired") -= draws[k].1,
            _ => {
                times.push(s);
                sizes.push(-draws[k].1);
            }
        }
    }
    let mu = CadlagPath::from_jumps(vec![initial], vec![c], horizon, vec![CoordFlag::Free], times, sizes)?;

    let mut rows = Vec::with_capacity(t_grid.len());
    let (mut nu, mut beta, mut gamma, mut xi) = (0usize, 0.0, 0.0, f64::NEG_INFINITY);
    for &t in t_grid {
        while nu == 0 || sums[nu] <= t {
            if nu >= m {
                return Err(Error::Capacity(format!("draws do not cover level {t}")));
            }
            let (_, b) = draws[nu];
            let mark = marks[nu];
            beta += b;
            gamma += c * mark - b;
            xi = xi.max(c * mark);
            nu += 1;
        }
        let overshoot = c * (t - sums[nu]);
        rows.push(RiskRow {
            t,
            mu: c * t - beta,
            overshoot_term: overshoot,
            stopped_sum: gamma,
            decomposed: overshoot + gamma,
            bound_lhs: overshoot.abs(),
            bound_rhs: xi,
        });
    }
    Ok(RiskRun { premium: c, mu, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OvershootCell {
    pub n: f64,
    pub probability: f64,
    pub se: f64,
}

/// Empirical `P{|c (t − κ(τ(t)))| > δ}` across an `n` sweep.
pub fn overshoot_sweep(
    model: &ArrayModel,
    n_list: &[f64],
    t: f64,
    delta: f64,
    replicates: usize,
    root_seed: u64,
) -> Result<Vec<OvershootCell>> {
    if replicates == 0 {
        return domain("replicates must be ≥ 1");
    }
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let hits: Vec<bool> = (0..replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = child_rng(root_seed, stream::RISK, ((i as u64) << 32) + r);
                    let run = build_risk_process(model, n, t, &[t], &mut rng)?;
                    Ok(run.rows[0].bound_lhs > delta)
                })
                .collect::<Result<_>>()?;
            let m = replicates as f64;
            let p = hits.iter().filter(|&&h| h).count() as f64 / m;
            Ok(OvershootCell { n, probability: p, se: (p * (1.0 - p) / m).sqrt() })
        })
        .collect()
}

/// `ζ(τ(t))` as a path on the stopping horizon.
pub fn stopped_triple(triple: &CadlagPath, stopping: &StoppingPath) -> Result<CadlagPath> {
    compose(triple, &stopping.path)
}

pub type TransformFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Transform {
    /// `γ − ξ`.
    Difference,
    /// `ξ / (a + |γ|)`.
    RatioConst { a: f64 },
    /// `ξ / (a t + |γ|)`, `t > 0`.
    RatioTime { a: f64 },
    /// Continuous `f(t, (ξ, γ, κ))`; sampled inside pieces when taking sups.
    Custom { name: String, f: TransformFn },
}

impl fmt::Debug for Transform {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Difference => write!(fm, "Difference"),
            Transform::RatioConst { a } => write!(fm, "RatioConst({a})"),
            Transform::RatioTime { a } => write!(fm, "RatioTime({a})"),
            Transform::Custom { name, .. } => write!(fm, "Custom({name})"),
        }
    }
}

impl Transform {
    fn apply(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Transform::Difference => x[1] - x[0],
            Transform::RatioConst { a } => x[0] / (a + x[1].abs()),
            Transform::RatioTime { a } => {
                if t <= 0.0 {
                    return domain("time-scaled ratio needs t > 0");
                }
                x[0] / (a * t + x[1].abs())
            }
            Transform::Custom { f, .. } => f(t, x),
        })
    }

    fn time_dependent(&self) -> bool {
        matches!(self, Transform::RatioTime { .. } | Transform::Custom { .. })
    }
}

/// Pointwise transform of a three-coordinate path.
#[derive(Clone, Debug)]
pub struct TransformedPath {
    pub source: CadlagPath,
    pub transform: Transform,
}

/// Points per piece when sampling time-dependent custom transforms.
const PIECE_SAMPLES: usize = 64;

impl TransformedPath {
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.transform.apply(t, &self.source.eval(t)?)
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.source.effective_jump_times()
    }

    /// One-coordinate step path, available when the transform ignores `t`
    /// and the source has no drift.
    pub fn as_path(&self) -> Result<CadlagPath> {
        if self.transform.time_dependent() || self.source.drift().iter().any(|&r| r != 0.0) {
            return contract("transform is not a step path");
        }
        let times = self.source.jump_times().to_vec();
        let levels = (1..=times.len()).map(|k| self.transform.apply(0.0, self.source.level_row(k))).collect::<Result<Vec<_>>>()?;
        let init = self.transform.apply(0.0, self.source.initial())?;
        CadlagPath::from_levels(vec![init], vec![0.0], self.source.horizon(), vec![CoordFlag::Free], times, levels)
    }

    /// `sup_{t ∈ [lo, hi]}` of the transformed path: endpoints, jump points
    /// and left limits, plus interior samples where the value can vary
    /// inside a piece in a non-monotone way.
    pub fn sup_over(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi && lo >= 0.0 && hi <= self.source.horizon()) {
            return domain("need 0 ≤ lo ≤ hi ≤ horizon");
        }
        let mut pts = vec![lo];
        pts.extend(self.jump_times().into_iter().filter(|&s| s > lo && s <= hi));
        pts.push(hi);
        let sample_inside = matches!(self.transform, Transform::Custom { .. }) || self.source.drift().iter().any(|&r| r != 0.0);
        let mut best = f64::NEG_INFINITY;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            best = best.max(self.eval(a)?);
            if b > a {
                best = best.max(self.transform.apply(b, &self.source.left_limit(b)?)?);
                if sample_inside {
                    for i in 1..PIECE_SAMPLES {
                        let s = a + (b - a) * i as f64 / PIECE_SAMPLES as f64;
                        best = best.max(self.eval(s)?);
                    }
                }
            }
        }
        Ok(best.max(self.eval(hi)?))
    }
}

pub fn transformed_path(triple: &CadlagPath, transform: Transform) -> Result<TransformedPath> {
    if triple.dim() != 3 {
        return contract("transforms act on (ξ, γ, κ) paths");
    }
    match transform {
        Transform::RatioConst { a } | Transform::RatioTime { a } if !(a > 0.0 && a.is_finite()) => {
            return domain("regularization parameter a must be positive");
        }
        _ => {}
    }
    Ok(TransformedPath { source: triple.clone(), transform })
}

/// Level function for first-passage stopping.
#[derive(Clone)]
pub enum PassageLevel {
    /// `f(s, x) = s`.
    Time,
    /// `f(s, x) = x_i`.
    Coordinate(usize),
    /// Continuous `f(s, x)`, nondecreasing in `s` for fixed `x`.
    Custom(TransformFn),
}

impl PassageLevel {
    fn eval(&self, s: f64, x: &[f64]) -> f64 {
        match self {
            PassageLevel::Time => s,
            PassageLevel::Coordinate(i) => x[*i],
            PassageLevel::Custom(f) => f(s, x),
        }
    }

    fn time_dependent(&self) -> bool {
        !matches!(self, PassageLevel::Coordinate(_))
    }
}

#[derive(Clone)]
pub enum StoppingScheme {
    /// `τ(t) = sup{s : f(s, ζ̂^{(h0)}(s)) ≤ t}` with the max truncated at `h0`.
    FirstPassage { level: PassageLevel, h0: f64 },
    /// Stopping on jumps of the running max.
    ExtremalJump,
}

/// Stopping times on a level grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingGrid {
    pub t_grid: Vec<f64>,
    pub tau: Vec<Inverse>,
    /// For the extremal scheme: the literal `sup{s : Δ_s ≤ t}` reading.
    pub literal_sup: Option<Vec<Inverse>>,
}

const BISECTION_STEPS: usize = 200;

fn first_passage(path: &CadlagPath, level: &PassageLevel, t: f64) -> Inverse {
    let times = path.jump_times();
    let m = times.len();
    let horizon = path.horizon();
    let drift = path.drift().iter().any(|&r| r != 0.0);
    // Pieces [start_j, end_j) scanned right to left.
    for j in (0..=m).rev() {
        let a = if j == 0 { 0.0 } else { times[j - 1] };
        let b = if j < m { times[j] } else { horizon };
        let g = |s: f64| {
            let x: Vec<f64> = if drift {
                path.level_row(j).iter().zip(path.drift()).map(|(l, r)| l + r * s).collect()
            } else {
                path.level_row(j).to_vec()
            };
            level.eval(s, &x)
        };
        if g(b) <= t {
            let status = if j == m { InverseStatus::Truncated } else { InverseStatus::Interior };
            return Inverse { time: b, status };
        }
        if (level.time_dependent() || drift) && g(a) <= t {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) <= t {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Inverse { time: hi, status: InverseStatus::Interior };
        }
    }
    Inverse { time: 0.0, status: InverseStatus::EmptyLevelSet }
}

/// Stopping times for a `(ξ, γ, κ)` path under an alternative scheme.
///
/// The extremal scheme reports the first-exceedance reading
/// `inf{s : Δ_s(ξ) > t}` in `tau` and the literal `sup{s : Δ_s(ξ) ≤ t}` in
/// `literal_sup`; the latter is the horizon because every continuity point
/// belongs to the set.
pub fn alternative_stopping(triple: &CadlagPath, scheme: &StoppingScheme, t_grid: &[f64]) -> Result<StoppingGrid> {
    if t_grid.iter().any(|t| t.is_nan()) {
        return domain("levels must not be NaN");
    }
    match scheme {
        StoppingScheme::FirstPassage { level, h0 } => {
            if let PassageLevel::Coordinate(i) = level {
                if *i >= triple.dim() {
                    return domain("coordinate out of range");
                }
            }
            let hat = if triple.flags().contains(&CoordFlag::RunningMax) { truncate_max(triple, *h0)? } else { triple.clone() };
            let tau = t_grid.iter().map(|&t| first_passage(&hat, level, t)).collect();
            Ok(StoppingGrid { t_grid: t_grid.to_vec(), tau, literal_sup: None })
        }
        StoppingScheme::ExtremalJump => {
            let c = triple
                .flags()
                .iter()
                .position(|&f| f == CoordFlag::RunningMax)
                .ok_or_else(|| Error::Contract("path has no running-max coordinate".into()))?;
            let jumps: Vec<(f64, f64)> = (0..triple.num_jumps()).map(|k| (triple.jump_times()[k], triple.jump_row(k)[c])).collect();
            let h = triple.horizon();
            let tau = t_grid
                .iter()
                .map(|&t| match jumps.iter().find(|(_, d)| *d > t) {
                    Some(&(s, _)) => Inverse { time: s, status: InverseStatus::Interior },
                    None => Inverse { time: h, status: InverseStatus::Truncated },
                })
                .collect();
            let literal = t_grid.iter().map(|_| Inverse { time: h, status: InverseStatus::Truncated }).collect();
            Ok(StoppingGrid { t_grid: t_grid.to_vec(), tau, literal_sup: Some(literal) })
        }
    }
}
