//! Triangular arrays of i.i.d. triples `(ξ, γ, κ)` and their prelimit paths.
//!
//! A model is a [`Family`] (which latent uniforms drive which component) plus
//! an affine [`Scaling`] per component. The array size `n` plays the role of
//! `n_ε`; all operations take it directly.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::marginal::Marginal;
use crate::path::{CadlagPath, CoordFlag, InverseStatus};
use crate::quad::{integrate, QuadConfig};
use crate::seed::{open_unit, SimRng};

pub const DEFAULT_MEMORY_BUDGET: usize = 10_000_000;
pub const DEFAULT_REJECTION_FLOOR: f64 = 1e-3;

/// `value = factor · (raw − center − log_shift · ln n) · n^(−exponent)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Affine {
    pub center: f64,
    pub exponent: f64,
    pub factor: f64,
    pub log_shift: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Self { center: 0.0, exponent: 0.0, factor: 1.0, log_shift: 0.0 }
    }
}

impl Affine {
    pub fn divide_by_n(exponent: f64) -> Self {
        Self { exponent, ..Self::default() }
    }

    fn slope(&self, n: f64) -> f64 {
        self.factor * n.powf(-self.exponent)
    }

    fn offset(&self, n: f64) -> f64 {
        if self.log_shift == 0.0 {
            self.center
        } else {
            self.center + self.log_shift * n.ln()
        }
    }

    pub fn apply(&self, raw: f64, n: f64) -> f64 {
        (raw - self.offset(n)) * self.slope(n)
    }

    pub fn invert(&self, value: f64, n: f64) -> f64 {
        value / self.slope(n) + self.offset(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    Comonotone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Constant raw triple.
    Deterministic { xi: f64, gamma: f64, kappa: f64 },
    /// Three independent components.
    Independent { xi: Marginal, gamma: Marginal, kappa: Marginal },
    /// `ξ = γ` from one law, `κ` independent.
    Identical { common: Marginal, kappa: Marginal },
    /// All components driven by one latent uniform.
    Comonotone { xi: Marginal, gamma: Marginal, kappa: Marginal },
    /// `ξ = γ = κ = X`.
    Renewal { interarrival: Marginal },
    /// `ξ = γ = Y` (claims) and `κ = X` (interarrival times), independent.
    InsurancePair { interarrival: Marginal, claim: Marginal },
    /// `ξ = Y`, `γ = Z`, `κ = X`; `Y` and `Z` coupled as requested.
    Earthquake { interarrival: Marginal, magnitude: Marginal, loss: Marginal, coupling: Coupling },
    /// `κ` interarrival, `β` claim, `ξ = c κ`, `γ = c κ − β` with
    /// `c = premium · n^premium_exponent`. The `xi` scaling is unused; `gamma`
    /// scales the claim.
    Risk {
        interarrival: Marginal,
        claim: Marginal,
        premium: f64,
        #[serde(default)]
        premium_exponent: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scaling {
    pub xi: Affine,
    pub gamma: Affine,
    pub kappa: Affine,
}

fn default_n_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}
fn default_budget() -> usize {
    DEFAULT_MEMORY_BUDGET
}
fn default_floor() -> f64 {
    DEFAULT_REJECTION_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayModel {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    pub memory_budget: usize,
    #[serde(default = "default_floor")]
    pub rejection_floor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleSample {
    pub xi: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl TripleSample {
    pub fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::Xi => self.xi,
            Coord::Gamma => self.gamma,
            Coord::Kappa => self.kappa,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coord {
    Xi,
    Gamma,
    Kappa,
}

impl Coord {
    pub const ALL: [Coord; 3] = [Coord::Xi, Coord::Gamma, Coord::Kappa];
    pub fn index(self) -> usize {
        self as usize
    }
}

/// A tail event `{X > level}` (upper) or `{X < level}` on one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub coord: Coord,
    pub upper: bool,
    pub level: f64,
}

impl Event {
    pub fn above(coord: Coord, level: f64) -> Self {
        Self { coord, upper: true, level }
    }
    pub fn below(coord: Coord, level: f64) -> Self {
        Self { coord, upper: false, level }
    }
    pub fn occurs(&self, t: &TripleSample) -> bool {
        let x = t.get(self.coord);
        if self.upper {
            x > self.level
        } else {
            x < self.level
        }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug)]
pub struct ConditionalSample {
    pub samples: Vec<TripleSample>,
    pub acceptance_rate: f64,
}

/// Stopping path `t ↦ sup{s : κ(s) ≤ t}` with its truncation status.
#[derive(Clone, Debug)]
pub struct StoppingPath {
    pub path: CadlagPath,
    /// True when κ never exceeded some level in `[0, t_max]`.
    pub truncated: bool,
}

/// One component as a function of the latent uniforms.
#[derive(Clone, Debug)]
enum Comp {
    Fixed(f64),
    /// `slope` and `offset` cache the affine map at the compiled `n`.
    Driven {
        latent: usize,
        law: Marginal,
        affine: Affine,
        slope: f64,
        offset: f64,
    },
    Diff(Box<Comp>, Box<Comp>),
}

impl Comp {
    fn eval(&self, s: &[f64], n: f64) -> f64 {
        match self {
            Comp::Fixed(v) => *v,
            Comp::Driven { latent, law, slope, offset, .. } => (law.upper_quantile(s[*latent], n) - offset) * slope,
            Comp::Diff(a, b) => a.eval(s, n) - b.eval(s, n),
        }
    }

    /// Latent interval `(lo, hi)` of the event and its probability, when the
    /// component is a single monotone function of one latent.
    fn event_interval(&self, upper: bool, level: f64, n: f64) -> Option<Interval> {
        match self {
            Comp::Fixed(v) => {
                let hit = if upper { *v > level } else { *v < level };
                Some(Interval { latent: None, lo: 0.0, hi: if hit { 1.0 } else { 0.0 } })
            }
            Comp::Driven { latent, law, affine, .. } => {
                let raw = affine.invert(level, n);
                let (lo, hi) = if upper { (0.0, law.sf(raw, n)) } else { (1.0 - law.cdf(raw, n), 1.0) };
                // Lower events use the strict cdf up to atoms; atoms at the
                // threshold itself are excluded by construction of the grids.
                Some(Interval { latent: Some(*latent), lo, hi })
            }
            Comp::Diff(..) => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Interval {
    latent: Option<usize>,
    lo: f64,
    hi: f64,
}

impl Interval {
    fn prob(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }
}

const MAX_LATENTS: usize = 3;

#[derive(Clone, Debug)]
struct Compiled {
    latents: usize,
    comps: [Comp; 3],
}

impl Compiled {
    fn draw_latents(&self, rng: &mut SimRng) -> [f64; MAX_LATENTS] {
        let mut s = [0.5; MAX_LATENTS];
        for x in &mut s[..self.latents] {
            *x = open_unit(rng);
        }
        s
    }

    fn triple(&self, s: &[f64], n: f64) -> TripleSample {
        TripleSample { xi: self.comps[0].eval(s, n), gamma: self.comps[1].eval(s, n), kappa: self.comps[2].eval(s, n).max(0.0) }
    }
}

impl ArrayModel {
    pub fn new(family: Family, scaling: Scaling) -> Self {
        Self { family, scaling, n_grid: default_n_grid(), memory_budget: DEFAULT_MEMORY_BUDGET, rejection_floor: DEFAULT_REJECTION_FLOOR }
    }

    pub fn with_n_grid(mut self, grid: Vec<f64>) -> Self {
        self.n_grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let laws: Vec<&Marginal> = match &self.family {
            Family::Deterministic { kappa, .. } => {
                if *kappa < self.scaling.kappa.center {
                    return domain("deterministic κ must be nonnegative after scaling");
                }
                vec![]
            }
            Family::Independent { xi, gamma, kappa } | Family::Comonotone { xi, gamma, kappa } => vec![xi, gamma, kappa],
            Family::Identical { common, kappa } => {
                if self.scaling.xi != self.scaling.gamma {
                    return domain("identical-components family needs equal ξ and γ scalings");
                }
                vec![common, kappa]
            }
            Family::Renewal { interarrival } => vec![interarrival],
            Family::InsurancePair { interarrival, claim } => vec![interarrival, claim],
            Family::Earthquake { interarrival, magnitude, loss, .. } => vec![interarrival, magnitude, loss],
            Family::Risk { interarrival, claim, premium, .. } => {
                if !(*premium >= 0.0) {
                    return domain("premium rate must be nonnegative");
                }
                vec![interarrival, claim]
            }
        };
        for law in laws {
            law.validate()?;
        }
        let kappa_law = match &self.family {
            Family::Independent { kappa, .. } | Family::Comonotone { kappa, .. } | Family::Identical { kappa, .. } => Some(kappa),
            Family::Renewal { interarrival }
            | Family::InsurancePair { interarrival, .. }
            | Family::Earthquake { interarrival, .. }
            | Family::Risk { interarrival, .. } => Some(interarrival),
            Family::Deterministic { .. } => None,
        };
        if let Some(law) = kappa_law {
            if !law.is_nonnegative() || self.scaling.kappa.center > 0.0 {
                return domain("κ law must be nonnegative (R₁ × R₁ × [0, ∞) triples)");
            }
        }
        for a in [self.scaling.xi, self.scaling.gamma, self.scaling.kappa] {
            if !(a.factor > 0.0 && a.factor.is_finite() && a.center.is_finite() && a.exponent.is_finite() && a.log_shift.is_finite()) {
                return domain(format!("invalid scaling {a:?}"));
            }
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| !(n >= 1.0 && n.is_finite())) {
            return domain("n grid must be nonempty with entries ≥ 1");
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return domain("n grid must be strictly increasing");
        }
        if !(self.rejection_floor > 0.0 && self.rejection_floor < 1.0) {
            return domain("rejection floor must lie in (0, 1)");
        }
        Ok(())
    }

    fn check_n(n: f64) -> Result<()> {
        if !(n >= 1.0 && n.is_finite()) {
            return domain(format!("array size n = {n} unsupported (need n ≥ 1)"));
        }
        Ok(())
    }

    fn compile(&self, n: f64) -> Compiled {
        let sc = &self.scaling;
        let driven = |latent: usize, law: &Marginal, affine: Affine| Comp::Driven {
            latent,
            law: law.clone(),
            affine,
            slope: affine.slope(n),
            offset: affine.offset(n),
        };
        match &self.family {
            Family::Deterministic { xi, gamma, kappa } => Compiled {
                latents: 0,
                comps: [Comp::Fixed(sc.xi.apply(*xi, n)), Comp::Fixed(sc.gamma.apply(*gamma, n)), Comp::Fixed(sc.kappa.apply(*kappa, n))],
            },
            Family::Independent { xi, gamma, kappa } => {
                Compiled { latents: 3, comps: [driven(0, xi, sc.xi), driven(1, gamma, sc.gamma), driven(2, kappa, sc.kappa)] }
            }
            Family::Identical { common, kappa } => {
                Compiled { latents: 2, comps: [driven(0, common, sc.gamma), driven(0, common, sc.gamma), driven(1, kappa, sc.kappa)] }
            }
            Family::Comonotone { xi, gamma, kappa } => {
                Compiled { latents: 1, comps: [driven(0, xi, sc.xi), driven(0, gamma, sc.gamma), driven(0, kappa, sc.kappa)] }
            }
            Family::Renewal { interarrival } => Compiled {
                latents: 1,
                comps: [driven(0, interarrival, sc.xi), driven(0, interarrival, sc.gamma), driven(0, interarrival, sc.kappa)],
            },
            Family::InsurancePair { interarrival, claim } => {
                Compiled { latents: 2, comps: [driven(1, claim, sc.xi), driven(1, claim, sc.gamma), driven(0, interarrival, sc.kappa)] }
            }
            Family::Earthquake { interarrival, magnitude, loss, coupling } => {
                let loss_latent = match coupling {
                    Coupling::Independent => 2,
                    Coupling::Comonotone => 1,
                };
                Compiled {
                    latents: 3,
                    comps: [driven(1, magnitude, sc.xi), driven(loss_latent, loss, sc.gamma), driven(0, interarrival, sc.kappa)],
                }
            }
            Family::Risk { interarrival, claim, premium, premium_exponent } => {
                let c = premium * n.powf(*premium_exponent);
                let kappa = driven(0, interarrival, sc.kappa);
                let xi = if c > 0.0 {
                    let mut a = sc.kappa;
                    a.factor *= c;
                    driven(0, interarrival, a)
                } else {
                    Comp::Fixed(0.0)
                };
                let gamma = Comp::Diff(Box::new(xi.clone()), Box::new(driven(1, claim, sc.gamma)));
                Compiled { latents: 2, comps: [xi, gamma, kappa] }
            }
        }
    }

    /// Premium rate `c_n` for the risk family, `None` otherwise.
    pub fn premium_rate(&self, n: f64) -> Option<f64> {
        match &self.family {
            Family::Risk { premium, premium_exponent, .. } => Some(premium * n.powf(*premium_exponent)),
            _ => None,
        }
    }

    pub fn sample_triple(&self, n: f64, rng: &mut SimRng) -> TripleSample {
        let c = self.compile(n);
        let s = c.draw_latents(rng);
        c.triple(&s, n)
    }

    pub fn sample_triples(&self, n: f64, count: usize, rng: &mut SimRng) -> Result<Vec<TripleSample>> {
        Self::check_n(n)?;
        if count == 0 {
            return domain("count must be ≥ 1");
        }
        let c = self.compile(n);
        Ok((0..count)
            .map(|_| {
                let s = c.draw_latents(rng);
                c.triple(&s, n)
            })
            .collect())
    }

    fn check_budget(&self, jumps: usize) -> Result<()> {
        if jumps > self.memory_budget {
            return Err(Error::Capacity(format!("path build needs {jumps} jumps, budget is {}", self.memory_budget)));
        }
        Ok(())
    }

    /// Prelimit triple `(ξ_n, γ_n, κ_n)` on `[0, horizon]` with jumps at `k/n`.
    pub fn build_prelimit(&self, n: f64, horizon: f64, rng: &mut SimRng) -> Result<CadlagPath> {
        Self::check_n(n)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain("horizon must be positive");
        }
        let count = (horizon * n).floor() as usize;
        self.check_budget(count)?;
        let c = self.compile(n);
        let first = c.triple(&c.draw_latents(rng), n);
        let mut draws = Vec::with_capacity(count);
        if count >= 1 {
            draws.push(first);
            for _ in 1..count {
                draws.push(c.triple(&c.draw_latents(rng), n));
            }
        }
        assemble(first.xi, &draws, n, horizon)
    }

    /// Prelimit triple drawn until `κ_n` first exceeds `level`; the horizon
    /// is the time of that exceedance.
    pub fn build_prelimit_covering(&self, n: f64, level: f64, rng: &mut SimRng) -> Result<CadlagPath> {
        Self::check_n(n)?;
        if !(level >= 0.0 && level.is_finite()) {
            return domain("level must be finite and nonnegative");
        }
        let draws = self.draw_covering(n, level, rng)?;
        let horizon = draws.len() as f64 / n;
        assemble(draws[0].xi, &draws, n, horizon)
    }

    /// Draws triples until the κ partial sum first exceeds `level`.
    pub fn draw_covering(&self, n: f64, level: f64, rng: &mut SimRng) -> Result<Vec<TripleSample>> {
        Self::check_n(n)?;
        if !(level >= 0.0 && level.is_finite()) {
            return domain("level must be finite and nonnegative");
        }
        let c = self.compile(n);
        let mut draws = Vec::new();
        let mut sum = 0.0;
        while sum <= level {
            if draws.len() >= self.memory_budget {
                return Err(Error::Capacity(format!("κ did not exceed {level} within the budget of {} draws", self.memory_budget)));
            }
            let t = c.triple(&c.draw_latents(rng), n);
            sum += t.kappa;
            draws.push(t);
        }
        Ok(draws)
    }

    /// Risk family only: `(κ_k, β_k)` pairs drawn until the κ partial sum
    /// first exceeds `level`, consuming the stream like [`Self::draw_covering`].
    pub fn draw_risk_covering(&self, n: f64, level: f64, rng: &mut SimRng) -> Result<Vec<(f64, f64)>> {
        Self::check_n(n)?;
        if !matches!(self.family, Family::Risk { .. }) {
            return domain("model is not a risk family");
        }
        if !(level >= 0.0 && level.is_finite()) {
            return domain("level must be finite and nonnegative");
        }
        let c = self.compile(n);
        let Comp::Diff(_, claim) = &c.comps[1] else {
            return contract("risk γ component must be a difference");
        };
        let mut draws = Vec::new();
        let mut sum = 0.0;
        while sum <= level {
            if draws.len() >= self.memory_budget {
                return Err(Error::Capacity(format!("κ did not exceed {level} within the budget of {} draws", self.memory_budget)));
            }
            let s = c.draw_latents(rng);
            let k = c.comps[2].eval(&s, n).max(0.0);
            sum += k;
            draws.push((k, claim.eval(&s, n)));
        }
        Ok(draws)
    }

    /// `ζ_n(τ_n(t))` for each level of an ascending grid, streaming the
    /// draws in the order used by [`Self::build_prelimit_covering`]: the
    /// stopped triple is `(max ξ_k, Σ γ_k, Σ κ_k)` over `k ≤ ν(t)`, with
    /// `ν(t)` the first index whose κ partial sum exceeds `t`.
    pub fn stopped_triples(&self, n: f64, t_grid: &[f64], rng: &mut SimRng) -> Result<Vec<TripleSample>> {
        Self::check_n(n)?;
        if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[1] < w[0]) {
            return domain("levels must be finite, nonnegative and ascending");
        }
        let c = self.compile(n);
        let mut out = Vec::with_capacity(t_grid.len());
        let (mut mx, mut g, mut k) = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut used = 0usize;
        for &t in t_grid {
            while used == 0 || k <= t {
                if used >= self.memory_budget {
                    return Err(Error::Capacity(format!("κ did not exceed {t} within the budget of {} draws", self.memory_budget)));
                }
                let d = c.triple(&c.draw_latents(rng), n);
                mx = mx.max(d.xi);
                g += d.gamma;
                k += d.kappa;
                used += 1;
            }
            out.push(TripleSample { xi: mx, gamma: g, kappa: k });
        }
        Ok(out)
    }

    /// Rejection sampling from the law of the triple given `ξ ≤ u`.
    pub fn sample_conditional_triples(&self, n: f64, u: f64, count: usize, rng: &mut SimRng) -> Result<ConditionalSample> {
        Self::check_n(n)?;
        if count == 0 {
            return domain("count must be ≥ 1");
        }
        let c = self.compile(n);
        let mut samples = Vec::with_capacity(count);
        let mut tries = 0usize;
        let floor = self.rejection_floor;
        while samples.len() < count {
            let t = c.triple(&c.draw_latents(rng), n);
            tries += 1;
            if t.xi <= u {
                samples.push(t);
            }
            if tries >= 1000 && (samples.len() as f64) < floor * tries as f64 {
                return Err(Error::Capacity(format!(
                    "acceptance rate {:.2e} below floor {floor:.0e}; choose a larger u",
                    samples.len() as f64 / tries as f64
                )));
            }
        }
        Ok(ConditionalSample { samples, acceptance_rate: count as f64 / tries as f64 })
    }

    /// Exact probability of a tail event when the coordinate is a function of
    /// a single latent; `None` otherwise.
    pub fn event_prob(&self, n: f64, e: Event) -> Option<f64> {
        let c = self.compile(n);
        c.comps[e.coord.index()].event_interval(e.upper, e.level, n).map(|i| i.prob())
    }

    /// `P(ξ > u)` in closed form when available.
    pub fn xi_tail(&self, n: f64, u: f64) -> Option<f64> {
        self.event_prob(n, Event::above(Coord::Xi, u))
    }

    /// `E[g(X) χ(lo < X ≤ hi)]` for one coordinate by quadrature over its
    /// latent uniform; `None` when the coordinate mixes several latents.
    pub fn truncated_expectation<F: Fn(f64) -> f64>(&self, n: f64, coord: Coord, lo: f64, hi: f64, g: F) -> Option<Result<f64>> {
        let c = self.compile(n);
        match &c.comps[coord.index()] {
            Comp::Fixed(v) => Some(Ok(if *v > lo && *v <= hi { g(*v) } else { 0.0 })),
            Comp::Driven { law, affine, .. } => {
                let s_lo = if hi.is_finite() { law.sf(affine.invert(hi, n), n) } else { 0.0 };
                let s_hi = if lo.is_finite() { law.sf(affine.invert(lo, n), n) } else { 1.0 };
                let f = |s: f64| g(affine.apply(law.upper_quantile(s, n), n));
                Some(latent_integral(&split_points(law, n, s_lo, s_hi), &f))
            }
            Comp::Diff(..) => None,
        }
    }

    /// Plain Monte Carlo estimate of `n · E[h(triple)]`.
    pub fn scaled_mc<H: Fn(&TripleSample) -> f64>(&self, n: f64, count: usize, rng: &mut SimRng, h: H) -> Estimate {
        let c = self.compile(n);
        let vals: Vec<f64> = (0..count).map(|_| h(&c.triple(&c.draw_latents(rng), n))).collect();
        scaled_mean(&vals, n)
    }

    /// Estimate of `n · E[h(triple)]` for `h` vanishing off the union of
    /// `events`, by sampling each event conditionally and weighting by the
    /// number of events that occur. `None` when some event is not a
    /// single-latent event.
    pub fn union_mc<H: Fn(&TripleSample) -> f64>(
        &self,
        n: f64,
        events: &[Event],
        count: usize,
        rng: &mut SimRng,
        h: H,
    ) -> Option<Estimate> {
        self.union_mc_multi(n, events, count, rng, &[&h]).map(|v| v[0])
    }

    /// [`Self::union_mc`] for several functions sharing one set of draws.
    pub fn union_mc_multi(
        &self,
        n: f64,
        events: &[Event],
        count: usize,
        rng: &mut SimRng,
        hs: &[&dyn Fn(&TripleSample) -> f64],
    ) -> Option<Vec<Estimate>> {
        let c = self.compile(n);
        let mut ivals = Vec::with_capacity(events.len());
        for e in events {
            ivals.push(c.comps[e.coord.index()].event_interval(e.upper, e.level, n)?);
        }
        let probs: Vec<f64> = ivals.iter().map(|i| i.prob()).collect();
        let total: f64 = probs.iter().sum();
        if total == 0.0 || count == 0 {
            return Some(vec![Estimate { value: 0.0, se: 0.0 }; hs.len()]);
        }
        let mut vals = vec![Vec::with_capacity(count); hs.len()];
        for _ in 0..count {
            let mut r = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < probs.len() && (r >= probs[k] || probs[k] == 0.0) {
                r -= probs[k];
                k += 1;
            }
            let mut s = c.draw_latents(rng);
            let iv = ivals[k];
            if let Some(l) = iv.latent {
                s[l] = iv.lo + (iv.hi - iv.lo) * open_unit(rng);
            }
            let t = c.triple(&s, n);
            let others = events.iter().enumerate().filter(|&(j, e)| j != k && e.occurs(&t)).count();
            for (v, h) in vals.iter_mut().zip(hs) {
                v.push(h(&t) / (1 + others) as f64);
            }
        }
        Some(
            vals.iter()
                .map(|v| {
                    let est = scaled_mean(v, n);
                    Estimate { value: est.value * total, se: est.se * total }
                })
                .collect(),
        )
    }

    /// Plain Monte Carlo for several functions sharing one set of draws.
    pub fn scaled_mc_multi(&self, n: f64, count: usize, rng: &mut SimRng, hs: &[&dyn Fn(&TripleSample) -> f64]) -> Vec<Estimate> {
        let c = self.compile(n);
        let mut vals = vec![Vec::with_capacity(count); hs.len()];
        for _ in 0..count {
            let t = c.triple(&c.draw_latents(rng), n);
            for (v, h) in vals.iter_mut().zip(hs) {
                v.push(h(&t));
            }
        }
        vals.iter().map(|v| scaled_mean(v, n)).collect()
    }

    /// `1 − E[exp(i(yγ + zκ)) χ(ξ ≤ u)]` for one triple, by quadrature over
    /// the latent uniforms; `None` unless every latent drives coordinates
    /// that are single monotone functions of it.
    pub fn single_term_defect(&self, n: f64, u: f64, y: f64, z: f64) -> Option<Result<Complex64>> {
        let c = self.compile(n);
        let mut fixed_theta = 0.0;
        let mut fixed_ok = true;
        for (k, comp) in c.comps.iter().enumerate() {
            match comp {
                Comp::Fixed(v) => match k {
                    0 => fixed_ok &= *v <= u,
                    1 => fixed_theta += y * v,
                    _ => fixed_theta += z * v,
                },
                Comp::Driven { .. } => {}
                Comp::Diff(..) => return None,
            }
        }
        if !fixed_ok {
            return Some(Ok(Complex64::new(1.0, 0.0)));
        }
        // log E = Σ over latents of log(1 − D_ℓ) plus the fixed phase.
        let mut log_e = Complex64::new(0.0, fixed_theta);
        for l in 0..c.latents {
            let d = match latent_defect(&c, l, n, u, y, z) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            log_e += log1m(d);
        }
        Some(Ok(-expm1(log_e)))
    }

    /// `E[exp(i(yγ + zκ)) χ(ξ ≤ u)]^n` evaluated through logarithms.
    pub fn single_term_power(&self, n: f64, u: f64, y: f64, z: f64) -> Option<Result<Complex64>> {
        let c = self.compile(n);
        if c.comps.iter().any(|k| matches!(k, Comp::Diff(..))) {
            return None;
        }
        let mut log_e = Complex64::new(0.0, 0.0);
        for (k, comp) in c.comps.iter().enumerate() {
            if let Comp::Fixed(v) = comp {
                match k {
                    0 if *v > u => return Some(Ok(Complex64::new(0.0, 0.0))),
                    0 => {}
                    1 => log_e += Complex64::new(0.0, y * v),
                    _ => log_e += Complex64::new(0.0, z * v),
                }
            }
        }
        for l in 0..c.latents {
            match latent_defect(&c, l, n, u, y, z) {
                Ok(d) => log_e += log1m(d),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok((log_e * n).exp()))
    }
}

/// `exp(w) − 1` accurate for small complex `w`.
pub fn expm1(w: Complex64) -> Complex64 {
    let (s, c) = w.im.sin_cos();
    let em = w.re.exp_m1();
    // e^a cos b − 1 = expm1(a) cos b − 2 sin²(b/2)
    let h = (0.5 * w.im).sin();
    Complex64::new(em * c - 2.0 * h * h, (em + 1.0) * s)
}

/// `log(1 − d)` accurate for small complex `d`.
pub fn log1m(d: Complex64) -> Complex64 {
    let w = -d;
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    let im = w.im.atan2(1.0 + w.re);
    Complex64::new(re, im)
}

/// Defect `1 − E[f_ℓ]` of the factor carried by latent `ℓ`.
fn latent_defect(c: &Compiled, l: usize, n: f64, u: f64, y: f64, z: f64) -> Result<Complex64> {
    let mut xi_comp = None;
    let mut phase: Vec<(&Marginal, Affine, f64)> = Vec::new();
    let mut laws: Vec<&Marginal> = Vec::new();
    for (k, comp) in c.comps.iter().enumerate() {
        if let Comp::Driven { latent, law, affine, .. } = comp {
            if *latent != l {
                continue;
            }
            laws.push(law);
            match k {
                0 => xi_comp = Some((law, *affine)),
                1 => phase.push((law, *affine, y)),
                _ => phase.push((law, *affine, z)),
            }
        }
    }
    if laws.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // Region where ξ ≤ u in latent coordinates: s ∈ [s_u, 1].
    let s_u = match xi_comp {
        Some((law, aff)) => law.sf(aff.invert(u, n), n),
        None => 0.0,
    };
    let theta = |s: f64| -> f64 {
        phase.iter().map(|(law, aff, w)| if *w == 0.0 { 0.0 } else { w * aff.apply(law.upper_quantile(s, n), n) }).sum()
    };
    let mut cuts = Vec::new();
    for law in &laws {
        cuts.extend(split_points(law, n, s_u, 1.0));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    // 1 − e^{iθ} = 2 sin²(θ/2) − i sin θ
    let re = latent_integral(&cuts, &|s| {
        let h = (0.5 * theta(s)).sin();
        2.0 * h * h
    })?;
    let im = latent_integral(&cuts, &|s| -theta(s).sin())?;
    Ok(Complex64::new(s_u + re, im))
}

/// Sorted cut points in `[lo, hi]`: the endpoints plus the latent values
/// where a sparse law switches between its zero atom and its inner law.
fn split_points(law: &Marginal, n: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    if let Marginal::Sparse { rate, inner } = law {
        let q = (rate / n).min(1.0);
        let above = q * inner.sf(0.0, n);
        for p in [above, above + (1.0 - q)] {
            if p > lo && p < hi {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts
}

/// `∫ f(s) ds` over consecutive intervals of `cuts`, evaluated in the
/// variable `r = −ln s` so heavy upper tails (s → 0) stay smooth.
fn latent_integral(cuts: &[f64], f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let pass = |g: &dyn Fn(f64) -> f64, cfg: QuadConfig| -> Result<f64> {
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) {
                continue;
            }
            let r_lo = -b.ln();
            let r_hi = if a > 0.0 { -a.ln() } else { f64::INFINITY };
            total += integrate(
                |r| {
                    let s = (-r).exp();
                    g(s) * s
                },
                r_lo,
                r_hi,
                cfg,
            )?;
        }
        Ok(total)
    };
    // absolute tolerance relative to ∫|f| so cancelling integrands terminate
    let scale = pass(&|s| f(s).abs(), QuadConfig { rel_tol: 1e-6, abs_tol: 1e-300, ..QuadConfig::default() })?;
    pass(f, QuadConfig { rel_tol: 1e-10, abs_tol: (1e-12 * scale).max(1e-300), ..QuadConfig::default() })
}

fn scaled_mean(vals: &[f64], n: f64) -> Estimate {
    let m = vals.len() as f64;
    if vals.is_empty() {
        return Estimate { value: 0.0, se: 0.0 };
    }
    let mean = vals.iter().sum::<f64>() / m;
    let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    Estimate { value: n * mean, se: n * (var / m).sqrt() }
}

/// Assembles the prelimit triple from draws `k = 1..=m` at times `k/n`.
pub(crate) fn assemble(xi_first: f64, draws: &[TripleSample], n: f64, horizon: f64) -> Result<CadlagPath> {
    let m = draws.len();
    let mut times = Vec::with_capacity(m);
    let mut sizes = Vec::with_capacity(3 * m);
    let mut levels = Vec::with_capacity(3 * (m + 1));
    let initial = vec![xi_first, 0.0, 0.0];
    levels.extend_from_slice(&initial);
    let (mut mx, mut g, mut k) = (xi_first, 0.0, 0.0);
    for (i, d) in draws.iter().enumerate() {
        times.push((i + 1) as f64 / n);
        let new_mx = mx.max(d.xi);
        sizes.extend_from_slice(&[new_mx - mx, d.gamma, d.kappa]);
        mx = new_mx;
        g += d.gamma;
        k += d.kappa;
        levels.extend_from_slice(&[mx, g, k]);
    }
    CadlagPath::from_parts(
        initial,
        vec![0.0; 3],
        horizon,
        vec![CoordFlag::RunningMax, CoordFlag::Free, CoordFlag::Nondecreasing],
        times,
        sizes,
        levels,
    )
}

/// `τ(t) = sup{s : κ(s) ≤ t}` on `[0, t_max]` for the κ coordinate (index
/// `coord`) of a pure-jump or pure-drift path.
pub fn build_stopping(prelimit: &CadlagPath, t_max: f64, coord: usize) -> Result<StoppingPath> {
    if coord >= prelimit.dim() {
        return domain("κ coordinate out of range");
    }
    if !prelimit.flags()[coord].is_monotone() {
        return contract("κ coordinate must be nondecreasing");
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return domain("t_max must be positive");
    }
    let drift = prelimit.drift()[coord];
    let init = prelimit.initial()[coord];
    let has_jumps = (0..prelimit.num_jumps()).any(|k| prelimit.jump_row(k)[coord] > 0.0);
    if drift > 0.0 && has_jumps {
        return contract("stopping paths of κ with both drift and jumps are not step+drift representable");
    }
    let h = prelimit.horizon();
    if drift > 0.0 {
        if init > 0.0 {
            return contract("pure-drift κ must start at 0");
        }
        let reach = drift * h;
        let truncated = reach < t_max;
        let path =
            CadlagPath::constant(vec![0.0], vec![1.0 / drift], if truncated { reach } else { t_max }, vec![CoordFlag::Nondecreasing])?;
        return Ok(StoppingPath { path, truncated });
    }
    let start = prelimit.generalized_inverse(0.0, coord)?;
    if start.status == InverseStatus::EmptyLevelSet {
        return domain("κ starts above level 0; empty level set");
    }
    let mut truncated = start.status == InverseStatus::Truncated;
    let mut times = Vec::new();
    let mut post = Vec::new();
    let mut current = start.time;
    for k in 0..prelimit.num_jumps() {
        let level = prelimit.level_row(k + 1)[coord];
        if level <= 0.0 || prelimit.jump_row(k)[coord] == 0.0 {
            continue;
        }
        if level > t_max {
            break;
        }
        let next = prelimit.generalized_inverse(level, coord)?;
        truncated |= next.status == InverseStatus::Truncated;
        if next.time != current {
            times.push(level);
            post.push(next.time);
            current = next.time;
        }
    }
    if prelimit.level_row(prelimit.num_jumps())[coord] <= t_max {
        truncated = true;
    }
    let path = CadlagPath::from_levels(vec![start.time], vec![0.0], t_max, vec![CoordFlag::Nondecreasing], times, post)?;
    Ok(StoppingPath { path, truncated })
}

/// Replaces the running-max coordinate by its pointwise maximum with `h`.
pub fn truncate_max(prelimit: &CadlagPath, h: f64) -> Result<CadlagPath> {
    let c = prelimit
        .flags()
        .iter()
        .position(|&f| f == CoordFlag::RunningMax)
        .ok_or_else(|| Error::Contract("path has no running-max coordinate".into()))?;
    let d = prelimit.dim();
    let mut initial = prelimit.initial().to_vec();
    initial[c] = initial[c].max(h);
    let mut post = Vec::with_capacity(prelimit.num_jumps() * d);
    for k in 0..prelimit.num_jumps() {
        let mut row = prelimit.level_row(k + 1).to_vec();
        row[c] = row[c].max(h);
        post.extend(row);
    }
    let mut sizes = Vec::with_capacity(post.len());
    let mut levels = initial.clone();
    for k in 0..prelimit.num_jumps() {
        for j in 0..d {
            sizes.push(if j == c { post[k * d + j] - levels[k * d + j] } else { prelimit.jump_row(k)[j] });
        }
        levels.extend_from_slice(&post[k * d..(k + 1) * d]);
    }
    CadlagPath::from_parts(
        initial,
        prelimit.drift().to_vec(),
        prelimit.horizon(),
        prelimit.flags().to_vec(),
        prelimit.jump_times().to_vec(),
        sizes,
        levels,
    )
}
