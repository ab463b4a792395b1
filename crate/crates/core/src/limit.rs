//! Limiting characteristics: the tail function of the max component, the
//! joint jump measure of the sum pair, the exceedance decomposition and the
//! characteristic functions and kernels built from them.
//!
//! The characteristic exponent of `(γ₀, κ₀)` at time 1 is
//!
//! ```text
//! ψ(y, z) = i a y − b² y² / 2 + i d z
//!         + ∫ (e^{i(yv + zw)} − 1 − i y v/(1+v²) − i z w/(1+w²)) Π(dv × dw)
//! ```
//!
//! i.e. each coordinate is compensated by its own truncation function, which
//! is the form under which `a`, `d` and the truncated-mean limits `a(v)`,
//! `c(w)` are linked.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::quad::{integrate, QuadConfig};

/// Tail function `π₁(u) = lim n P(ξ > u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailFunction {
    /// `(u/scale)^(−alpha)` for `u > 0`.
    Frechet {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `exp(−(u − location)/scale)`.
    Gumbel { location: f64, scale: f64 },
    /// `((endpoint − u)/scale)^alpha` below the endpoint, 0 above.
    NegWeibull { alpha: f64, endpoint: f64, scale: f64 },
    /// Right-continuous step function: `∞` below `floor`, `values[k]` on
    /// `[points[k−1], points[k])` (with `points[−1] = floor`), last value 0.
    Step { floor: f64, points: Vec<f64>, values: Vec<f64> },
    /// `∞` below the threshold, 0 from it on.
    ZeroAbove { threshold: f64 },
    /// `mass · exp(−rate (u − floor))` from `floor` on, `∞` below.
    ExponentialFloor { mass: f64, rate: f64, floor: f64 },
}

fn one() -> f64 {
    1.0
}

impl TailFunction {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            TailFunction::Frechet { alpha, scale } => *alpha > 0.0 && *scale > 0.0,
            TailFunction::Gumbel { location, scale } => location.is_finite() && *scale > 0.0,
            TailFunction::NegWeibull { alpha, endpoint, scale } => *alpha > 0.0 && endpoint.is_finite() && *scale > 0.0,
            TailFunction::Step { floor, points, values } => {
                values.len() == points.len() + 1
                    && values.last() == Some(&0.0)
                    && values.windows(2).all(|w| w[0] >= w[1])
                    && values.iter().all(|v| *v >= 0.0 && v.is_finite())
                    && points.windows(2).all(|w| w[0] < w[1])
                    && points.first().is_none_or(|p| p > floor)
                    && !floor.is_nan()
            }
            TailFunction::ZeroAbove { threshold } => threshold.is_finite(),
            TailFunction::ExponentialFloor { mass, rate, floor } => *mass > 0.0 && *rate > 0.0 && floor.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid tail function {self:?}"))
        }
    }

    /// Tail function of a finite set of marks: `π₁(u) = mass{mark > u}` for
    /// `u ≥ floor`, infinite below.
    pub fn from_marks(floor: f64, marks: &[(f64, f64)]) -> Self {
        let mut pts: Vec<f64> = marks.iter().map(|m| m.0).filter(|&m| m >= floor).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let pts: Vec<f64> = pts.into_iter().filter(|&p| p > floor).collect();
        let above = |u: f64| marks.iter().filter(|m| m.0 > u).map(|m| m.1).sum::<f64>();
        let mut values = vec![above(floor)];
        values.extend(pts.iter().map(|&p| above(p)));
        if let Some(v) = values.last_mut() {
            *v = 0.0;
        }
        TailFunction::Step { floor, points: pts, values }
    }

    pub fn pi1(&self, u: f64) -> f64 {
        if u == f64::INFINITY {
            return 0.0;
        }
        if u == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        match self {
            TailFunction::Frechet { alpha, scale } => {
                if u <= 0.0 {
                    f64::INFINITY
                } else {
                    (u / scale).powf(-alpha)
                }
            }
            TailFunction::Gumbel { location, scale } => (-(u - location) / scale).exp(),
            TailFunction::NegWeibull { alpha, endpoint, scale } => {
                if u >= *endpoint {
                    0.0
                } else {
                    ((endpoint - u) / scale).powf(*alpha)
                }
            }
            TailFunction::Step { floor, points, values } => {
                if u < *floor {
                    f64::INFINITY
                } else {
                    values[points.partition_point(|&p| p <= u)]
                }
            }
            TailFunction::ZeroAbove { threshold } => {
                if u < *threshold {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            TailFunction::ExponentialFloor { mass, rate, floor } => {
                if u < *floor {
                    f64::INFINITY
                } else {
                    mass * (-(u - floor) * rate).exp()
                }
            }
        }
    }

    /// `u_π = sup{u : π₁(u) = ∞}`.
    pub fn u_pi(&self) -> f64 {
        match self {
            TailFunction::Frechet { .. } => 0.0,
            TailFunction::Gumbel { .. } | TailFunction::NegWeibull { .. } => f64::NEG_INFINITY,
            TailFunction::Step { floor, .. } => *floor,
            TailFunction::ZeroAbove { threshold } => *threshold,
            TailFunction::ExponentialFloor { floor, .. } => *floor,
        }
    }

    /// `v_π = inf{u : π₁(u) = 0}`.
    pub fn v_pi(&self) -> f64 {
        match self {
            TailFunction::Frechet { .. } | TailFunction::Gumbel { .. } | TailFunction::ExponentialFloor { .. } => f64::INFINITY,
            TailFunction::NegWeibull { endpoint, .. } => *endpoint,
            TailFunction::Step { floor, points, .. } => points.last().copied().unwrap_or(*floor),
            TailFunction::ZeroAbove { threshold } => *threshold,
        }
    }

    /// Discontinuity points of π₁ (where it is finite on at least one side).
    pub fn discontinuities(&self) -> Vec<f64> {
        match self {
            TailFunction::Step { floor, points, .. } => {
                let mut d = vec![*floor];
                d.extend(points);
                d
            }
            TailFunction::ZeroAbove { threshold } => vec![*threshold],
            TailFunction::ExponentialFloor { floor, .. } => vec![*floor],
            _ => vec![],
        }
    }

    /// `inf{u : π₁(u) ≤ p}` for `p > 0`.
    pub fn pi1_inverse(&self, p: f64) -> f64 {
        if !(p > 0.0) {
            return self.v_pi();
        }
        match self {
            TailFunction::Frechet { alpha, scale } => scale * p.powf(-1.0 / alpha),
            TailFunction::Gumbel { location, scale } => location - scale * p.ln(),
            TailFunction::NegWeibull { alpha, endpoint, scale } => endpoint - scale * p.powf(1.0 / alpha),
            TailFunction::Step { floor, points, values } => {
                if values[0] <= p {
                    *floor
                } else {
                    // first index k ≥ 1 with values[k] ≤ p
                    let k = values.partition_point(|&v| v > p);
                    points[k - 1]
                }
            }
            TailFunction::ZeroAbove { threshold } => *threshold,
            TailFunction::ExponentialFloor { mass, rate, floor } => {
                if p >= *mass {
                    *floor
                } else {
                    floor + (mass / p).ln() / rate
                }
            }
        }
    }
}

/// One atom of a discrete jump measure: a jump `(v, w)` of the sum pair
/// arriving with an optional mark `u` for the max component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(default)]
    pub u_mark: Option<f64>,
    pub v: f64,
    pub w: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Gamma,
    Kappa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Pos,
    Neg,
}

/// Density in `s = |coordinate|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "density", rename_all = "snake_case")]
pub enum Density {
    /// `weight · alpha · s^(−alpha−1)`, tail mass `weight · s^(−alpha)`.
    Power { alpha: f64, weight: f64 },
    /// `mass · rate · e^(−rate s)`.
    Exponential { mass: f64, rate: f64 },
}

impl Density {
    fn at(&self, s: f64) -> f64 {
        match *self {
            Density::Power { alpha, weight } => weight * alpha * s.powf(-alpha - 1.0),
            Density::Exponential { mass, rate } => mass * rate * (-rate * s).exp(),
        }
    }

    /// Mass of `(lo, hi)`.
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Density::Power { alpha, weight } => {
                let a = if lo > 0.0 { lo.powf(-alpha) } else { f64::INFINITY };
                let b = if hi.is_finite() { hi.powf(-alpha) } else { 0.0 };
                weight * (a - b)
            }
            Density::Exponential { mass, rate } => {
                let b = if hi.is_finite() { (-rate * hi).exp() } else { 0.0 };
                mass * ((-rate * lo).exp() - b)
            }
        }
    }

    /// Inverse of the restricted tail: the `s` with mass(s, hi) = q · mass(lo, hi).
    fn sample(&self, lo: f64, hi: f64, q: f64) -> f64 {
        match *self {
            Density::Power { alpha, .. } => {
                let a = lo.powf(-alpha);
                let b = if hi.is_finite() { hi.powf(-alpha) } else { 0.0 };
                (b + q * (a - b)).powf(-1.0 / alpha)
            }
            Density::Exponential { rate, .. } => {
                let a = (-rate * lo).exp();
                let b = if hi.is_finite() { (-rate * hi).exp() } else { 0.0 };
                -(b + q * (a - b)).ln() / rate
            }
        }
    }
}

/// Absolutely continuous jump mass on one half-axis, `s ∈ (lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPiece {
    pub axis: Axis,
    pub side: Side,
    #[serde(flatten)]
    pub density: Density,
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "inf", skip_serializing_if = "is_inf")]
    pub hi: f64,
}

fn inf() -> f64 {
    f64::INFINITY
}

fn is_inf(x: &f64) -> bool {
    *x == f64::INFINITY
}

impl AxisPiece {
    pub fn mass(&self) -> f64 {
        self.density.mass(self.lo, self.hi)
    }

    fn coords(&self, s: f64) -> (f64, f64) {
        match (self.axis, self.side) {
            (Axis::Gamma, Side::Pos) => (s, 0.0),
            (Axis::Gamma, Side::Neg) => (-s, 0.0),
            (Axis::Kappa, _) => (0.0, s),
        }
    }

    fn restricted(&self, lo: f64, hi: f64) -> Option<AxisPiece> {
        let lo = self.lo.max(lo);
        let hi = self.hi.min(hi);
        (lo < hi).then_some(AxisPiece { lo, hi, ..*self })
    }
}

/// How the max component is attached to analytic jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxCoupling {
    /// Jumps never carry a max mark.
    Independent,
    /// Positive γ jumps carry their own size as max mark (`ξ = γ`).
    Identical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "representation", rename_all = "snake_case")]
pub enum JointJumpMeasure {
    Atoms { atoms: Vec<Atom> },
    Analytic { pieces: Vec<AxisPiece>, coupling: MaxCoupling },
}

impl Default for JointJumpMeasure {
    fn default() -> Self {
        JointJumpMeasure::Atoms { atoms: vec![] }
    }
}

/// Jump drawn from a finite measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpMark {
    pub u_mark: Option<f64>,
    pub v: f64,
    pub w: f64,
}

impl JointJumpMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                for a in atoms {
                    if !(a.mass > 0.0 && a.mass.is_finite()) || !a.v.is_finite() || !(a.w >= 0.0 && a.w.is_finite()) {
                        return domain(format!("invalid atom {a:?}"));
                    }
                    if a.u_mark.is_none() && a.v == 0.0 && a.w == 0.0 {
                        return domain("atom with no mark and (v, w) = (0, 0) is a null jump");
                    }
                    if a.u_mark.is_some_and(|u| !u.is_finite()) {
                        return domain("atom marks must be finite");
                    }
                }
            }
            JointJumpMeasure::Analytic { pieces, .. } => {
                for p in pieces {
                    if !(p.lo >= 0.0 && p.lo < p.hi) {
                        return domain(format!("piece range invalid: {p:?}"));
                    }
                    if p.axis == Axis::Kappa && p.side == Side::Neg {
                        return domain("κ jumps are nonnegative");
                    }
                    match p.density {
                        Density::Power { alpha, weight } => {
                            if !(alpha > 0.0 && weight > 0.0) {
                                return domain("power density needs alpha, weight > 0");
                            }
                            let limit = if p.axis == Axis::Gamma { 2.0 } else { 1.0 };
                            if p.lo == 0.0 && alpha >= limit {
                                return domain("power density not integrable at the origin");
                            }
                        }
                        Density::Exponential { mass, rate } => {
                            if !(mass > 0.0 && rate > 0.0) {
                                return domain("exponential density needs mass, rate > 0");
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Total jump rate including pure max-marks (may be infinite).
    pub fn total_mass(&self) -> f64 {
        match self {
            JointJumpMeasure::Atoms { atoms } => atoms.iter().map(|a| a.mass).sum(),
            JointJumpMeasure::Analytic { pieces, .. } => pieces.iter().map(AxisPiece::mass).sum(),
        }
    }

    pub fn is_finite_activity(&self) -> bool {
        self.total_mass().is_finite()
    }

    /// `mass{mark > u}`.
    pub fn mark_mass_above(&self, u: f64) -> f64 {
        match self {
            JointJumpMeasure::Atoms { atoms } => atoms.iter().filter(|a| a.u_mark.is_some_and(|m| m > u)).map(|a| a.mass).sum(),
            JointJumpMeasure::Analytic { pieces, coupling } => match coupling {
                MaxCoupling::Independent => 0.0,
                MaxCoupling::Identical => pieces
                    .iter()
                    .filter(|p| p.axis == Axis::Gamma && p.side == Side::Pos)
                    .filter_map(|p| p.restricted(u.max(0.0), f64::INFINITY))
                    .map(|p| p.mass())
                    .sum(),
            },
        }
    }

    /// `∫ f(v, w) Π(dv × dw)` over jumps with `(v, w) ≠ (0, 0)`.
    pub fn integrate_joint(&self, f: &dyn Fn(f64, f64) -> f64, cfg: QuadConfig) -> Result<f64> {
        match self {
            JointJumpMeasure::Atoms { atoms } => Ok(atoms.iter().filter(|a| a.v != 0.0 || a.w != 0.0).map(|a| a.mass * f(a.v, a.w)).sum()),
            JointJumpMeasure::Analytic { pieces, .. } => {
                let mut total = 0.0;
                for p in pieces {
                    total += piece_integral(
                        p,
                        &|s| {
                            let (v, w) = p.coords(s);
                            f(v, w)
                        },
                        cfg,
                    )?;
                }
                Ok(total)
            }
        }
    }

    /// `∫_{lo < v < hi, v ≠ 0} f(v) Π₂(dv)`.
    pub fn integrate_gamma(&self, f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, cfg: QuadConfig) -> Result<f64> {
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                Ok(atoms.iter().filter(|a| a.v != 0.0 && a.v > lo && a.v < hi).map(|a| a.mass * f(a.v)).sum())
            }
            JointJumpMeasure::Analytic { pieces, .. } => {
                let mut total = 0.0;
                for p in pieces.iter().filter(|p| p.axis == Axis::Gamma) {
                    let r = match p.side {
                        Side::Pos => p.restricted(lo.max(0.0), hi),
                        Side::Neg => p.restricted((-hi).max(0.0), -lo),
                    };
                    if let Some(r) = r {
                        let sign = if p.side == Side::Pos { 1.0 } else { -1.0 };
                        total += piece_integral(&r, &|s| f(sign * s), cfg)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// `∫_{lo < w < hi, w > 0} f(w) Π₃(dw)`.
    pub fn integrate_kappa(&self, f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, cfg: QuadConfig) -> Result<f64> {
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                Ok(atoms.iter().filter(|a| a.w > 0.0 && a.w > lo && a.w < hi).map(|a| a.mass * f(a.w)).sum())
            }
            JointJumpMeasure::Analytic { pieces, .. } => {
                let mut total = 0.0;
                for p in pieces.iter().filter(|p| p.axis == Axis::Kappa) {
                    if let Some(r) = p.restricted(lo.max(0.0), hi) {
                        total += piece_integral(&r, f, cfg)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// Compensated integral `∫ (e^{i(yv+zw)} − 1 − i yv/(1+v²) − i zw/(1+w²)) Π`.
    pub fn compensated_exponent(&self, y: f64, z: f64, cfg: QuadConfig) -> Result<Complex64> {
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                let mut re = 0.0;
                let mut im = 0.0;
                for a in atoms.iter().filter(|a| a.v != 0.0 || a.w != 0.0) {
                    let th = y * a.v + z * a.w;
                    let h = (0.5 * th).sin();
                    re -= a.mass * 2.0 * h * h;
                    im += a.mass * (th.sin() - y * a.v / (1.0 + a.v * a.v) - z * a.w / (1.0 + a.w * a.w));
                }
                Ok(Complex64::new(re, im))
            }
            JointJumpMeasure::Analytic { pieces, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in pieces {
                    let theta = match (p.axis, p.side) {
                        (Axis::Gamma, Side::Pos) => y,
                        (Axis::Gamma, Side::Neg) => -y,
                        (Axis::Kappa, _) => z,
                    };
                    acc += piece_exponent(p, theta, cfg)?;
                }
                Ok(acc)
            }
        }
    }

    /// Split into the parts with and without a mark above `u`.
    fn split_at(&self, u: f64) -> (JointJumpMeasure, JointJumpMeasure) {
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                let (hit, rest): (Vec<Atom>, Vec<Atom>) = atoms.iter().partition(|a| a.u_mark.is_some_and(|m| m > u));
                (JointJumpMeasure::Atoms { atoms: hit }, JointJumpMeasure::Atoms { atoms: rest })
            }
            JointJumpMeasure::Analytic { pieces, coupling } => {
                let mut hit = Vec::new();
                let mut rest = Vec::new();
                for p in pieces {
                    if *coupling == MaxCoupling::Identical && p.axis == Axis::Gamma && p.side == Side::Pos {
                        hit.extend(p.restricted(u.max(0.0), f64::INFINITY));
                        rest.extend(p.restricted(0.0, u.max(0.0)));
                    } else {
                        rest.push(*p);
                    }
                }
                (
                    JointJumpMeasure::Analytic { pieces: hit, coupling: *coupling },
                    JointJumpMeasure::Analytic { pieces: rest, coupling: *coupling },
                )
            }
        }
    }

    /// Cumulative table for exact sampling from a finite measure.
    pub fn sampler(&self) -> Result<JumpSampler> {
        let mut entries = Vec::new();
        match self {
            JointJumpMeasure::Atoms { atoms } => {
                for a in atoms {
                    entries.push((a.mass, SamplerEntry::Atom(*a)));
                }
            }
            JointJumpMeasure::Analytic { pieces, coupling } => {
                for p in pieces {
                    let m = p.mass();
                    if !m.is_finite() {
                        return contract("infinite-activity jump measures cannot be sampled");
                    }
                    entries.push((m, SamplerEntry::Piece(*p, *coupling)));
                }
            }
        }
        let total: f64 = entries.iter().map(|e| e.0).sum();
        let mut cum = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (m, _) in &entries {
            acc += m;
            cum.push(acc);
        }
        Ok(JumpSampler { total, cum, entries: entries.into_iter().map(|e| e.1).collect() })
    }

    /// Atom list as CSV `u_mark,v,w,mass` with `NONE` for missing marks.
    pub fn atoms_to_csv(&self) -> Result<String> {
        let JointJumpMeasure::Atoms { atoms } = self else {
            return contract("only discrete measures serialize as atom lists");
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["u_mark", "v", "w", "mass"])?;
        for a in atoms {
            let mark = a.u_mark.map_or("NONE".to_string(), crate::path::fmt17);
            w.write_record([mark, crate::path::fmt17(a.v), crate::path::fmt17(a.w), crate::path::fmt17(a.mass)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn atoms_from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut atoms = Vec::new();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}")));
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Config("atom rows need 4 fields".into()));
            }
            let u_mark = if rec[0].trim() == "NONE" { None } else { Some(num(&rec[0])?) };
            atoms.push(Atom { u_mark, v: num(&rec[1])?, w: num(&rec[2])?, mass: num(&rec[3])? });
        }
        let m = JointJumpMeasure::Atoms { atoms };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug)]
enum SamplerEntry {
    Atom(Atom),
    Piece(AxisPiece, MaxCoupling),
}

/// Draws jumps proportionally to mass.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    pub total: f64,
    cum: Vec<f64>,
    entries: Vec<SamplerEntry>,
}

impl JumpSampler {
    /// Maps two uniforms to a jump.
    pub fn draw(&self, u1: f64, u2: f64) -> JumpMark {
        let target = u1 * self.total;
        let k = self.cum.partition_point(|&c| c <= target).min(self.entries.len() - 1);
        match &self.entries[k] {
            SamplerEntry::Atom(a) => JumpMark { u_mark: a.u_mark, v: a.v, w: a.w },
            SamplerEntry::Piece(p, coupling) => {
                let s = p.density.sample(p.lo, p.hi, u2);
                let (v, w) = p.coords(s);
                let u_mark = (*coupling == MaxCoupling::Identical && p.axis == Axis::Gamma && p.side == Side::Pos).then_some(v);
                JumpMark { u_mark, v, w }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() || self.total == 0.0
    }
}

/// `sin x − x` without cancellation for small `x`.
fn sin_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        x.sin() - x
    }
}

/// `∫ f(s) ρ(s) ds` over a piece, splitting at 1 so both a singular origin
/// and an unbounded tail are handled.
fn piece_integral(p: &AxisPiece, f: &dyn Fn(f64) -> f64, cfg: QuadConfig) -> Result<f64> {
    let g = |s: f64| f(s) * p.density.at(s);
    let mut total = 0.0;
    let mid = 1.0f64.clamp(p.lo, p.hi);
    if mid > p.lo {
        total += integrate(g, p.lo, mid, cfg)?;
    }
    if p.hi > mid {
        total += integrate(g, mid, p.hi, cfg)?;
    }
    Ok(total)
}

/// `∫ (e^{iθs} − 1 − iθs/(1+s²)) ρ(s) ds` over a piece.
fn piece_exponent(p: &AxisPiece, theta: f64, cfg: QuadConfig) -> Result<Complex64> {
    if theta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let re_f = |s: f64| {
        let h = (0.5 * theta * s).sin();
        -2.0 * h * h
    };
    // sin θs − θs/(1+s²) = (sin θs − θs) + θ s³/(1+s²)
    let im_f = |s: f64| sin_minus_x(theta * s) + theta * s * s * s / (1.0 + s * s);
    if let (Density::Exponential { mass, rate }, true) = (p.density, p.hi.is_infinite()) {
        // closed form for the oscillatory part; compensator by quadrature
        let k = Complex64::new(rate, -theta);
        let e = Complex64::new(0.0, theta * p.lo).exp() * (-rate * p.lo).exp() * mass * rate / k;
        let plain = mass * (-rate * p.lo).exp();
        let comp = piece_integral(p, &|s| s / (1.0 + s * s), cfg)?;
        return Ok(e - plain - Complex64::new(0.0, theta * comp));
    }
    let cut = if p.hi.is_finite() { p.hi } else { (p.lo.max(1.0)).max(20.0 / theta.abs()) };
    let head = p.restricted(p.lo, cut);
    let mut acc = Complex64::new(0.0, 0.0);
    if let Some(h) = head {
        acc += Complex64::new(piece_integral(&h, &re_f, cfg)?, piece_integral(&h, &im_f, cfg)?);
    }
    if p.hi.is_infinite() && cut < f64::INFINITY {
        let tail = AxisPiece { lo: cut, ..*p };
        let Density::Power { alpha, weight } = p.density else { unreachable!() };
        // ∫_S^∞ e^{iθs} ρ(s) ds along the ray s = S + i·sign(θ)·t.
        let sgn = theta.signum();
        let ray = |t: f64, part: usize| -> f64 {
            let s = Complex64::new(cut, sgn * t);
            let val = Complex64::new(0.0, theta).scale(1.0) * s;
            let v = val.exp() * s.powf(-alpha - 1.0) * Complex64::new(0.0, sgn) * (weight * alpha);
            if part == 0 {
                v.re
            } else {
                v.im
            }
        };
        let osc = Complex64::new(integrate(|t| ray(t, 0), 0.0, f64::INFINITY, cfg)?, integrate(|t| ray(t, 1), 0.0, f64::INFINITY, cfg)?);
        let plain = tail.mass();
        let comp = piece_integral(&tail, &|s| s / (1.0 + s * s), cfg)?;
        acc += osc - plain - Complex64::new(0.0, theta * comp);
    }
    Ok(acc)
}

/// Limiting data `(π₁, Π, a, b², c, d)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCharacteristics {
    pub tail: TailFunction,
    pub jumps: JointJumpMeasure,
    pub a: f64,
    pub b2: f64,
    pub c: f64,
    /// `c + ∫ s/(1+s²) Π₃(ds)`.
    pub d: f64,
}

/// Serialized form; `d` is always derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsSpec {
    pub tail: TailFunction,
    #[serde(default)]
    pub jumps: JointJumpMeasure,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b2: f64,
    #[serde(default)]
    pub c: f64,
}

impl<'de> Deserialize<'de> for LimitCharacteristics {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = CharacteristicsSpec::deserialize(d)?;
        LimitCharacteristics::new(spec.tail, spec.jumps, spec.a, spec.b2, spec.c).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceedanceDecomposition {
    pub u: f64,
    pub pi_u: JointJumpMeasure,
    pub hat_pi_u: JointJumpMeasure,
    pub a_u: f64,
    pub d_u: f64,
}

#[derive(Clone, Debug)]
pub struct SamplerParameters {
    pub gamma_drift: f64,
    pub kappa_drift: f64,
    pub b: f64,
    pub jumps: JointJumpMeasure,
}

fn quad() -> QuadConfig {
    QuadConfig { rel_tol: 1e-10, abs_tol: 1e-14, ..QuadConfig::default() }
}

impl LimitCharacteristics {
    pub fn new(tail: TailFunction, jumps: JointJumpMeasure, a: f64, b2: f64, c: f64) -> Result<Self> {
        tail.validate()?;
        jumps.validate()?;
        if !a.is_finite() || !(b2 >= 0.0 && b2.is_finite()) || !(c >= 0.0 && c.is_finite()) {
            return domain("need finite a, b² ≥ 0, c ≥ 0");
        }
        let d = c + jumps.integrate_kappa(&|s| s / (1.0 + s * s), 0.0, f64::INFINITY, quad())?;
        Ok(Self { tail, jumps, a, b2, c, d })
    }

    pub fn spec(&self) -> CharacteristicsSpec {
        CharacteristicsSpec { tail: self.tail.clone(), jumps: self.jumps.clone(), a: self.a, b2: self.b2, c: self.c }
    }

    pub fn pi1(&self, u: f64) -> f64 {
        self.tail.pi1(u)
    }

    pub fn u_pi(&self) -> f64 {
        self.tail.u_pi()
    }

    /// Running minimum from the right, then `Π exp(−π₁(u_k)(t_k − t_{k−1}))`.
    pub fn extremal_fdd(&self, times: &[f64], levels: &[f64]) -> Result<f64> {
        if times.len() != levels.len() || times.is_empty() {
            return domain("times and levels must be nonempty and of equal length");
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return domain("times must be positive and strictly increasing");
        }
        let mut eff = levels.to_vec();
        for k in (0..eff.len().saturating_sub(1)).rev() {
            eff[k] = eff[k].min(eff[k + 1]);
        }
        let mut log_p = 0.0;
        let mut prev = 0.0;
        for (t, u) in times.iter().zip(&eff) {
            let p = self.pi1(*u);
            if p.is_infinite() {
                return Ok(0.0);
            }
            log_p -= p * (t - prev);
            prev = *t;
        }
        Ok(log_p.exp())
    }

    /// `χ(v ≤ u) exp(−t π₁(u))`.
    pub fn transition_kernel(&self, v: f64, u: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return domain("t must be nonnegative");
        }
        if v > u {
            return Ok(0.0);
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        let p = self.pi1(u);
        Ok(if p.is_infinite() { 0.0 } else { (-t * p).exp() })
    }

    /// Characteristic exponent `ψ(y, z)` of `(γ₀(1), κ₀(1))`.
    pub fn levy_exponent(&self, y: f64, z: f64) -> Result<Complex64> {
        let jump = self.jumps.compensated_exponent(y, z, quad())?;
        Ok(Complex64::new(-0.5 * self.b2 * y * y, self.a * y + self.d * z) + jump)
    }

    pub fn levy_charfn(&self, t: f64, y: f64, z: f64) -> Result<Complex64> {
        if !(t >= 0.0) {
            return domain("t must be nonnegative");
        }
        if t == 0.0 || (y == 0.0 && z == 0.0) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok((self.levy_exponent(y, z)? * t).exp())
    }

    fn admissible(&self, u: f64) -> bool {
        let up = self.u_pi();
        u > up || (u == up && self.pi1(up).is_finite())
    }

    pub fn exceedance_decomposition(&self, u: f64) -> Result<ExceedanceDecomposition> {
        if !self.admissible(u) {
            return domain(format!("u = {u} below the admissible range: need u > u_π = {}, or u = u_π with π₁(u_π) finite", self.u_pi()));
        }
        let (pi_u, hat_pi_u) = self.jumps.split_at(u);
        let a_u = self.a - pi_u.integrate_gamma(&|s| s / (1.0 + s * s), f64::NEG_INFINITY, f64::INFINITY, quad())?;
        let d_u = self.d - pi_u.integrate_kappa(&|s| s / (1.0 + s * s), 0.0, f64::INFINITY, quad())?;
        Ok(ExceedanceDecomposition { u, pi_u, hat_pi_u, a_u, d_u })
    }

    pub fn conditional_exponent(&self, dec: &ExceedanceDecomposition, y: f64, z: f64) -> Result<Complex64> {
        let jump = dec.hat_pi_u.compensated_exponent(y, z, quad())?;
        Ok(Complex64::new(-0.5 * self.b2 * y * y, dec.a_u * y + dec.d_u * z) + jump)
    }

    pub fn conditional_charfn(&self, u: f64, t: f64, y: f64, z: f64) -> Result<Complex64> {
        if !(t >= 0.0) {
            return domain("t must be nonnegative");
        }
        if !self.admissible(u) || t == 0.0 || (y == 0.0 && z == 0.0) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let dec = self.exceedance_decomposition(u)?;
        Ok((self.conditional_exponent(&dec, y, z)? * t).exp())
    }

    /// `χ(u′ ≤ u) exp(−t π₁(u)) φ^{(u)}(t, y, z)`.
    pub fn hybrid_kernel(&self, u_prev: f64, u: f64, t: f64, y: f64, z: f64) -> Result<Complex64> {
        let k = self.transition_kernel(u_prev, u, t)?;
        if k == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.conditional_charfn(u, t, y, z)? * k)
    }

    /// `a(v) = a + ∫_{|s|<v} s³/(1+s²) Π₂ − ∫_{|s|>v} s/(1+s²) Π₂`.
    pub fn a_of_v(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return domain("v must be positive");
        }
        let inner = self.jumps.integrate_gamma(&|s| s * s * s / (1.0 + s * s), -v, v, quad())?;
        let outer_pos = self.jumps.integrate_gamma(&|s| s / (1.0 + s * s), v, f64::INFINITY, quad())?;
        let outer_neg = self.jumps.integrate_gamma(&|s| s / (1.0 + s * s), f64::NEG_INFINITY, -v, quad())?;
        Ok(self.a + inner - outer_pos - outer_neg)
    }

    /// `c(w) = c + ∫_{(0,w)} s Π₃(ds)`.
    pub fn c_of_w(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return domain("w must be positive");
        }
        Ok(self.c + self.jumps.integrate_kappa(&|s| s, 0.0, w, quad())?)
    }

    /// `b² + ∫_{|s| ≤ v} s² Π₂(ds)`: the truncated-variance target at level `v`.
    pub fn truncated_variance(&self, v: f64) -> Result<f64> {
        // closed interval: include atoms at ±v
        let eps = v * 1e-15;
        Ok(self.b2 + self.jumps.integrate_gamma(&|s| s * s, -v - eps, v + eps, quad())?)
    }

    /// `a^{(u)}` by the route through `a^{(u)}(v)`:
    /// `a^{(u)}(v) = a(v) − ∫_{|s|≤v} s Π₂^{(u)}`, then the constant relation
    /// applied with `Π̂₂^{(u)}`.
    pub fn a_u_via_truncation(&self, u: f64, v: f64) -> Result<f64> {
        let dec = self.exceedance_decomposition(u)?;
        let q = quad();
        let eps = v * 1e-15;
        let a_uv = self.a_of_v(v)? - dec.pi_u.integrate_gamma(&|s| s, -v - eps, v + eps, q)?;
        let inner = dec.hat_pi_u.integrate_gamma(&|s| s * s * s / (1.0 + s * s), -v, v, q)?;
        let outer = dec.hat_pi_u.integrate_gamma(&|s| s / (1.0 + s * s), v, f64::INFINITY, q)?
            + dec.hat_pi_u.integrate_gamma(&|s| s / (1.0 + s * s), f64::NEG_INFINITY, -v, q)?;
        Ok(a_uv - inner + outer)
    }

    /// Drift and jump data for an uncompensated finite-activity sampler.
    pub fn sampler_parameters(&self) -> Result<SamplerParameters> {
        if !self.jumps.is_finite_activity() {
            return contract("sampler parameters need a finite jump measure");
        }
        let q = quad();
        let gamma_drift = self.a - self.jumps.integrate_gamma(&|s| s / (1.0 + s * s), f64::NEG_INFINITY, f64::INFINITY, q)?;
        let kappa_drift = self.d - self.jumps.integrate_kappa(&|s| s / (1.0 + s * s), 0.0, f64::INFINITY, q)?;
        if kappa_drift < -1e-12 {
            return contract(format!("recovered κ drift {kappa_drift} is negative"));
        }
        Ok(SamplerParameters { gamma_drift, kappa_drift: kappa_drift.max(0.0), b: self.b2.sqrt(), jumps: self.jumps.clone() })
    }

    /// Largest `|π₁(u) − mass{mark > u}|` over `grid ∩ (u_π, ∞)`.
    pub fn mark_consistency_gap(&self, grid: &[f64]) -> f64 {
        grid.iter().filter(|&&u| u > self.u_pi()).map(|&u| (self.pi1(u) - self.jumps.mark_mass_above(u)).abs()).fold(0.0, f64::max)
    }
}

/// Set `V` of stochastic-continuity points of the stopping limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuitySet {
    /// All of `(0, ∞)`.
    All,
    /// `(0, ∞)` minus the sums `w₁l₁ + ⋯ + w_m l_m` (`l_i ≥ 0`, not all 0).
    LatticeComplement { generators: Vec<f64> },
}

impl ContinuitySet {
    pub fn contains(&self, t: f64) -> bool {
        match self {
            ContinuitySet::All => t > 0.0,
            ContinuitySet::LatticeComplement { generators } => t > 0.0 && !in_lattice(t, generators),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ContinuitySet::All => "all of (0,inf)".into(),
            ContinuitySet::LatticeComplement { generators } => {
                let g: Vec<String> = generators.iter().map(|w| format!("{w}")).collect();
                format!("(0,inf) minus nonnegative integer combinations of {{{}}}", g.join(", "))
            }
        }
    }
}

fn in_lattice(t: f64, gens: &[f64]) -> bool {
    fn rec(t: f64, gens: &[f64], tol: f64, budget: &mut usize) -> bool {
        if t.abs() <= tol {
            return true;
        }
        if t < 0.0 || gens.is_empty() || *budget == 0 {
            return false;
        }
        *budget -= 1;
        let g = gens[0];
        let mut k = 0.0;
        while k * g <= t + tol {
            if rec(t - k * g, &gens[1..], tol, budget) {
                return true;
            }
            k += 1.0;
        }
        false
    }
    let mut budget = 1_000_000;
    rec(t, gens, 1e-9 * t.max(1.0), &mut budget)
}

/// Predicates D, D₁, D₂ on the κ characteristics and the set `V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionD {
    pub d: bool,
    pub d1: bool,
    pub d2: bool,
    pub kappa_jump_mass: f64,
    pub continuity: ContinuitySet,
}

impl LimitCharacteristics {
    /// `Π₃((0, ∞))`, possibly infinite.
    pub fn kappa_jump_mass(&self) -> f64 {
        match &self.jumps {
            JointJumpMeasure::Atoms { atoms } => atoms.iter().filter(|a| a.w > 0.0).map(|a| a.mass).sum(),
            JointJumpMeasure::Analytic { pieces, .. } => pieces.iter().filter(|p| p.axis == Axis::Kappa).map(AxisPiece::mass).sum(),
        }
    }

    pub fn classify_condition_d(&self) -> ConditionD {
        let m = self.kappa_jump_mass();
        let continuity = match &self.jumps {
            JointJumpMeasure::Atoms { atoms } if self.c == 0.0 && m.is_finite() => {
                let mut g: Vec<f64> = atoms.iter().filter(|a| a.w > 0.0).map(|a| a.w).collect();
                g.sort_by(f64::total_cmp);
                g.dedup();
                if g.is_empty() {
                    ContinuitySet::All
                } else {
                    ContinuitySet::LatticeComplement { generators: g }
                }
            }
            _ => ContinuitySet::All,
        };
        ConditionD {
            d: self.c > 0.0 || m > 0.0,
            d1: self.c > 0.0 || m.is_infinite(),
            d2: m > 0.0 && m.is_finite(),
            kappa_jump_mass: m,
            continuity,
        }
    }

    /// True when no jump of the sum pair carries a max mark, so `ξ₀` is
    /// independent of `(γ₀, κ₀)`.
    pub fn is_factorized(&self) -> bool {
        match &self.jumps {
            JointJumpMeasure::Atoms { atoms } => atoms.iter().all(|a| a.u_mark.is_none() || (a.v == 0.0 && a.w == 0.0)),
            JointJumpMeasure::Analytic { pieces, coupling } => {
                *coupling == MaxCoupling::Independent || pieces.iter().all(|p| !(p.axis == Axis::Gamma && p.side == Side::Pos))
            }
        }
    }
}

/// Shift `a` for mean-centred Pareto(alpha) draws scaled by `n^(−1/alpha)`,
/// `1 < alpha < 2`: `a(v) → 0` as `v → ∞`, so
/// `a = −∫_0^∞ s³/(1+s²) · alpha s^(−alpha−1) ds`.
pub fn identical_power_shift(alpha: f64) -> f64 {
    -alpha * PI / (2.0 * (PI * (3.0 - alpha) / 2.0).sin())
}
