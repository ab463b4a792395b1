//! Exact finite-activity samplers for the limit processes.
//!
//! Jump parts are a single marked Poisson stream; the Gaussian part of `γ₀`
//! lives on a separate Euler skeleton and is interpolated linearly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::limit::{JointJumpMeasure, JumpSampler, LimitCharacteristics};
use crate::path::{CadlagPath, CoordFlag};
use crate::seed::{open_unit, SimRng};

/// Default number of skeleton steps per horizon.
pub const DEFAULT_SKELETON_STEPS: f64 = 1024.0;
/// Horizon doublings allowed when the stopping level is not reached.
pub const MAX_EXTENSIONS: usize = 40;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HybridSampleConfig {
    pub chars: LimitCharacteristics,
    pub horizon: f64,
    #[serde(default)]
    pub euler_step: Option<f64>,
    #[serde(default)]
    pub initial_max: Option<f64>,
}

impl HybridSampleConfig {
    pub fn new(chars: LimitCharacteristics, horizon: f64) -> Self {
        Self { chars, horizon, euler_step: None, initial_max: None }
    }

    fn step(&self) -> Result<f64> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain("horizon must be positive");
        }
        let step = self.euler_step.unwrap_or(self.horizon / DEFAULT_SKELETON_STEPS);
        if !(step > 0.0) || step > self.horizon / 100.0 * (1.0 + 1e-12) {
            return domain(format!("euler_step {step} must lie in (0, horizon/100]"));
        }
        Ok(step)
    }
}

/// Brownian skeleton `b·W` on the grid `k·step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub step: f64,
    pub values: Vec<f64>,
}

impl Skeleton {
    fn zero(step: f64) -> Self {
        Self { step, values: vec![0.0] }
    }

    fn extend_to(&mut self, horizon: f64, b: f64, rng: &mut SimRng) {
        if b == 0.0 {
            return;
        }
        let sd = b * self.step.sqrt();
        while ((self.values.len() - 1) as f64) * self.step < horizon {
            let z: f64 = rng.sample(StandardNormal);
            let last = *self.values.last().expect("skeleton starts at 0");
            self.values.push(last + sd * z);
        }
    }

    /// Linear interpolation; 0 when the Gaussian part is absent.
    pub fn eval(&self, t: f64) -> f64 {
        if self.values.len() == 1 {
            return 0.0;
        }
        let x = t / self.step;
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }
}

/// Jump path plus Gaussian skeleton added to one coordinate.
#[derive(Clone, Debug)]
pub struct LimitPath {
    pub path: CadlagPath,
    pub skeleton: Skeleton,
    pub gauss_coord: usize,
}

impl LimitPath {
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut v = self.path.eval(t)?;
        v[self.gauss_coord] += self.skeleton.eval(t);
        Ok(v)
    }

    pub fn has_gaussian(&self) -> bool {
        self.skeleton.values.len() > 1
    }
}

/// Record construction of the extremal process from `t_start` on.
///
/// The returned path holds the entry level on `[0, t_start]`; only values at
/// `t ≥ t_start` are distributed as `ξ₀(t)`.
pub fn sample_extremal(chars: &LimitCharacteristics, t_start: f64, horizon: f64, rng: &mut SimRng) -> Result<CadlagPath> {
    if !(t_start > 0.0 && t_start <= horizon && horizon.is_finite()) {
        return domain(format!("need 0 < t_start ≤ horizon, got {t_start}, {horizon}"));
    }
    let tail = &chars.tail;
    let entry = tail.pi1_inverse(-open_unit(rng).ln() / t_start);
    if !entry.is_finite() {
        return Err(Error::Numeric(format!("entry level {entry} is not finite")));
    }
    let mut times = Vec::new();
    let mut levels = Vec::new();
    let mut t = t_start;
    let mut level = entry;
    loop {
        let rate = tail.pi1(level);
        if !(rate > 0.0) {
            break;
        }
        if !rate.is_finite() {
            return Err(Error::Numeric(format!("π₁ infinite at the current level {level}")));
        }
        t += -open_unit(rng).ln() / rate;
        if t > horizon {
            break;
        }
        let next = tail.pi1_inverse(open_unit(rng) * rate);
        if !(next > level) {
            return Err(Error::Numeric(format!("record step from {level} did not increase")));
        }
        times.push(t);
        levels.push(next);
        level = next;
    }
    CadlagPath::from_levels(vec![entry], vec![0.0], horizon, vec![CoordFlag::RunningMax], times, levels)
}

/// Extendable marked Poisson stream with the Gaussian skeleton.
struct Stream {
    sampler: JumpSampler,
    next_epoch: f64,
    epochs: Vec<(f64, f64, f64, f64)>,
    skeleton: Skeleton,
    b: f64,
}

impl Stream {
    fn new(jumps: &JointJumpMeasure, b: f64, step: f64, rng: &mut SimRng) -> Result<Self> {
        let sampler = jumps.sampler()?;
        let next_epoch = if sampler.is_empty() { f64::INFINITY } else { -open_unit(rng).ln() / sampler.total };
        Ok(Self { sampler, next_epoch, epochs: Vec::new(), skeleton: Skeleton::zero(step), b })
    }

    /// Epoch rows are `(time, u_mark or −∞, v, w)`.
    fn extend_to(&mut self, horizon: f64, rng: &mut SimRng) {
        while self.next_epoch <= horizon {
            let (u1, u2) = (open_unit(rng), open_unit(rng));
            let m = self.sampler.draw(u1, u2);
            self.epochs.push((self.next_epoch, m.u_mark.unwrap_or(f64::NEG_INFINITY), m.v, m.w));
            self.next_epoch += -open_unit(rng).ln() / self.sampler.total;
        }
        self.skeleton.extend_to(horizon, self.b, rng);
    }
}

struct Drifts {
    gamma: f64,
    kappa: f64,
    b: f64,
}

fn drifts(chars: &LimitCharacteristics) -> Result<Drifts> {
    let sp = chars.sampler_parameters()?;
    Ok(Drifts { gamma: sp.gamma_drift, kappa: sp.kappa_drift, b: sp.b })
}

fn levy_path(stream: &Stream, d: &Drifts, horizon: f64) -> Result<LimitPath> {
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    for &(t, _, v, w) in stream.epochs.iter().filter(|e| e.0 <= horizon) {
        if v == 0.0 && w == 0.0 {
            continue;
        }
        times.push(t);
        sizes.extend([v, w]);
    }
    let path = CadlagPath::from_jumps(
        vec![0.0, 0.0],
        vec![d.gamma, d.kappa],
        horizon,
        vec![CoordFlag::Free, CoordFlag::Nondecreasing],
        times,
        sizes,
    )?;
    Ok(LimitPath { path, skeleton: stream.skeleton.clone(), gauss_coord: 0 })
}

fn hybrid_path(stream: &Stream, d: &Drifts, initial_max: f64, horizon: f64) -> Result<LimitPath> {
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    let mut levels = vec![initial_max, 0.0, 0.0];
    let (mut x, mut g, mut k) = (initial_max, 0.0, 0.0);
    for &(t, mark, v, w) in stream.epochs.iter().filter(|e| e.0 <= horizon) {
        let dx = if mark > x { mark - x } else { 0.0 };
        if dx == 0.0 && v == 0.0 && w == 0.0 {
            continue;
        }
        // the max level is the mark itself, not an accumulated sum
        x = x.max(mark);
        g += v;
        k += w;
        times.push(t);
        sizes.extend([dx, v, w]);
        levels.extend([x, g, k]);
    }
    let path = CadlagPath::from_parts(
        vec![initial_max, 0.0, 0.0],
        vec![0.0, d.gamma, d.kappa],
        horizon,
        vec![CoordFlag::RunningMax, CoordFlag::Free, CoordFlag::Nondecreasing],
        times,
        sizes,
        levels,
    )?;
    Ok(LimitPath { path, skeleton: stream.skeleton.clone(), gauss_coord: 1 })
}

/// `(γ₀, κ₀)` on `[0, horizon]`.
pub fn sample_levy(chars: &LimitCharacteristics, horizon: f64, euler_step: Option<f64>, rng: &mut SimRng) -> Result<LimitPath> {
    let cfg = HybridSampleConfig { chars: chars.clone(), horizon, euler_step, initial_max: None };
    let step = cfg.step()?;
    let d = drifts(chars)?;
    let mut s = Stream::new(&chars.jumps, d.b, step, rng)?;
    s.extend_to(horizon, rng);
    levy_path(&s, &d, horizon)
}

/// Checks `π₁(u) = mass{mark > u}` above the starting level.
pub fn check_mark_consistency(chars: &LimitCharacteristics, initial_max: f64) -> Result<()> {
    if initial_max < chars.u_pi() {
        return contract(format!("initial_max {initial_max} lies below u_π = {}", chars.u_pi()));
    }
    if !chars.pi1(initial_max).is_finite() {
        return contract(format!("π₁({initial_max}) is infinite; the hybrid sampler needs a finite mark rate"));
    }
    let mut grid = vec![initial_max];
    if let JointJumpMeasure::Atoms { atoms } = &chars.jumps {
        let mut marks: Vec<f64> = atoms.iter().filter_map(|a| a.u_mark).filter(|&m| m >= initial_max).collect();
        marks.sort_by(f64::total_cmp);
        marks.dedup();
        for w in marks.windows(2) {
            grid.push(0.5 * (w[0] + w[1]));
        }
        grid.extend(&marks);
        if let Some(&m) = marks.last() {
            grid.push(m + 1.0);
        }
    }
    let scale = if initial_max.is_finite() && initial_max != 0.0 { initial_max.abs() } else { 1.0 };
    grid.extend((0..40).map(|k| initial_max + scale * 1.25f64.powi(k - 20)));
    for u in grid {
        let lhs = chars.pi1(u);
        let rhs = chars.jumps.mark_mass_above(u);
        if (lhs - rhs).abs() > 1e-9 * lhs.abs().max(1.0) {
            return contract(format!("π₁({u}) = {lhs} but the marks above {u} have mass {rhs}"));
        }
    }
    Ok(())
}

/// `(ξ₀, γ₀, κ₀)` on `[0, horizon]` from one marked Poisson stream.
pub fn sample_hybrid(cfg: &HybridSampleConfig, rng: &mut SimRng) -> Result<LimitPath> {
    let step = cfg.step()?;
    let initial_max = cfg.initial_max.unwrap_or(cfg.chars.u_pi());
    check_mark_consistency(&cfg.chars, initial_max)?;
    let d = drifts(&cfg.chars)?;
    let mut s = Stream::new(&cfg.chars.jumps, d.b, step, rng)?;
    s.extend_to(cfg.horizon, rng);
    hybrid_path(&s, &d, initial_max, cfg.horizon)
}

/// One row of a stopped-limit sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StoppedRow {
    pub t: f64,
    pub tau: f64,
    pub xi: f64,
    pub gamma: f64,
    pub kappa: f64,
}

/// `(ξ₀(τ₀(t)), γ₀(τ₀(t)), κ₀(τ₀(t)))` over a level grid.
///
/// When no sum jump carries a max mark the max component is drawn from
/// [`sample_extremal`] independently of the sum pair, which also covers tail
/// functions that are infinite near `u_π`. Otherwise a hybrid sample is used.
pub fn sample_stopped_limit(cfg: &HybridSampleConfig, t_grid: &[f64], rng: &mut SimRng) -> Result<Vec<StoppedRow>> {
    let chars = &cfg.chars;
    let cd = chars.classify_condition_d();
    if !cd.d {
        return domain("condition D fails: κ₀ ≡ 0 has no stopping inverse");
    }
    if t_grid.is_empty() {
        return domain("empty level grid");
    }
    for &t in t_grid {
        if !cd.continuity.contains(t) {
            return domain(format!("level {t} is not a continuity point of the stopping limit; V is {}", cd.continuity.describe()));
        }
    }
    let t_max = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let step = cfg.step()?;
    let factorized = chars.is_factorized();
    let initial_max = cfg.initial_max.unwrap_or(chars.u_pi());
    if !factorized {
        check_mark_consistency(chars, initial_max)?;
    }
    let d = drifts(chars)?;
    let mut s = Stream::new(&chars.jumps, d.b, step, rng)?;
    let mut horizon = cfg.horizon;
    let mut tries = 0;
    loop {
        s.extend_to(horizon, rng);
        let kappa_end = d.kappa * horizon + s.epochs.iter().map(|e| e.3).sum::<f64>();
        if kappa_end > t_max {
            break;
        }
        tries += 1;
        if tries > MAX_EXTENSIONS {
            return Err(Error::Capacity(format!("κ₀ stayed below {t_max} up to horizon {horizon}")));
        }
        horizon *= 2.0;
    }
    let lp = if factorized { levy_path(&s, &d, horizon)? } else { hybrid_path(&s, &d, initial_max, horizon)? };
    let kc = lp.path.dim() - 1;
    let taus: Vec<f64> = t_grid.iter().map(|&t| lp.path.generalized_inverse(t, kc).map(|i| i.time)).collect::<Result<_>>()?;
    let xi_at: Vec<f64> = if factorized {
        let positive: Vec<f64> = taus.iter().copied().filter(|&x| x > 0.0).collect();
        match positive.iter().copied().reduce(f64::min) {
            Some(lo) => {
                let hi = positive.iter().copied().fold(lo, f64::max);
                let ext = sample_extremal(chars, lo, hi, rng)?;
                taus.iter().map(|&x| if x > 0.0 { ext.eval_coord(x, 0) } else { Ok(chars.u_pi()) }).collect::<Result<_>>()?
            }
            None => vec![chars.u_pi(); taus.len()],
        }
    } else {
        taus.iter().map(|&x| lp.path.eval_coord(x, 0)).collect::<Result<_>>()?
    };
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let v = lp.eval(taus[k])?;
        rows.push(StoppedRow { t, tau: taus[k], xi: xi_at[k], gamma: v[kc - 1], kappa: v[kc] });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{Atom, TailFunction};
    use crate::seed::child_rng;
    use num_complex::Complex64;

    fn frechet1() -> LimitCharacteristics {
        LimitCharacteristics::new(TailFunction::Frechet { alpha: 1.0, scale: 1.0 }, JointJumpMeasure::empty(), 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn extremal_paths_are_nondecreasing_and_match_fdd() {
        let ch = frechet1();
        let n = 20_000;
        let ts = [0.5, 1.0, 2.0];
        let us = [0.5, 1.0, 2.0, 4.0];
        let mut counts = [[0usize; 4]; 3];
        for i in 0..n {
            let mut rng = child_rng(7, 1, i);
            let p = sample_extremal(&ch, 0.5, 2.0, &mut rng).unwrap();
            for k in 0..p.num_jumps() {
                assert!(p.jump_row(k)[0] > 0.0);
            }
            for (a, &t) in ts.iter().enumerate() {
                let x = p.eval_coord(t, 0).unwrap();
                for (b, &u) in us.iter().enumerate() {
                    counts[a][b] += usize::from(x <= u);
                }
            }
        }
        for (a, &t) in ts.iter().enumerate() {
            for (b, &u) in us.iter().enumerate() {
                let emp = counts[a][b] as f64 / n as f64;
                assert!((emp - (-t / u).exp()).abs() < 0.02, "t={t} u={u}: {emp}");
            }
        }
    }

    #[test]
    fn holding_time_mean() {
        let ch = LimitCharacteristics::new(
            TailFunction::ExponentialFloor { mass: 2.0, rate: 1.0, floor: 0.0 },
            JointJumpMeasure::empty(),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        // entry at floor when E/t ≥ 2; the first hold at level 0 is Exp(2)
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut m = 0.0;
        for i in 0..20_000 {
            let mut rng = child_rng(3, 1, i);
            let p = sample_extremal(&ch, 1e-9, 50.0, &mut rng).unwrap();
            if p.initial()[0] == 0.0 && p.num_jumps() > 0 {
                let h = p.jump_times()[0] - 1e-9;
                sum += h;
                sq += h * h;
                m += 1.0;
            }
        }
        let mean = sum / m;
        let se = ((sq / m - mean * mean) / m).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn deterministic_lines() {
        let ch = LimitCharacteristics::new(TailFunction::ZeroAbove { threshold: 0.0 }, JointJumpMeasure::empty(), 0.7, 0.0, 1.5).unwrap();
        let mut rng = child_rng(1, 1, 0);
        let p = sample_levy(&ch, 4.0, None, &mut rng).unwrap();
        assert_eq!(p.path.num_jumps(), 0);
        let v = p.eval(2.0).unwrap();
        assert!((v[0] - 1.4).abs() < 1e-15 && (v[1] - 3.0).abs() < 1e-15);
    }

    fn cp_gauss() -> LimitCharacteristics {
        let atoms = vec![
            Atom { u_mark: None, v: 1.0, w: 0.5, mass: 0.8 },
            Atom { u_mark: None, v: -0.7, w: 0.0, mass: 0.5 },
            Atom { u_mark: None, v: 0.0, w: 1.2, mass: 0.3 },
        ];
        LimitCharacteristics::new(TailFunction::ZeroAbove { threshold: 0.0 }, JointJumpMeasure::Atoms { atoms }, 0.2, 0.36, 0.4).unwrap()
    }

    #[test]
    fn levy_charfn_matches_at_t1() {
        let ch = cp_gauss();
        let n = 20_000;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let mut rng = child_rng(11, 2, i);
                let p = sample_levy(&ch, 1.0, None, &mut rng).unwrap();
                let v = p.eval(1.0).unwrap();
                (v[0], v[1])
            })
            .collect();
        for y in [-1.0, 0.0, 1.0] {
            for z in [-1.0, 0.0, 1.0] {
                let emp: Complex64 = pts.iter().map(|&(g, k)| Complex64::new(0.0, y * g + z * k).exp()).sum::<Complex64>() / n as f64;
                let exact = ch.levy_charfn(1.0, y, z).unwrap();
                assert!((emp - exact).norm() < 3.0 / (n as f64).sqrt() + 0.01, "({y},{z})");
            }
        }
    }

    #[test]
    fn kappa_nondecreasing_and_skeleton_bounds() {
        let ch = cp_gauss();
        let mut rng = child_rng(2, 2, 0);
        let p = sample_levy(&ch, 3.0, Some(0.01), &mut rng).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..=300 {
            let v = p.eval(k as f64 * 0.01).unwrap();
            assert!(v[1] >= last);
            last = v[1];
        }
        assert!(sample_levy(&ch, 3.0, Some(0.5), &mut rng).is_err());
    }

    #[test]
    fn unmarked_hybrid_is_constant_max() {
        let mut ch = cp_gauss();
        ch.tail = TailFunction::ZeroAbove { threshold: 0.0 };
        let cfg = HybridSampleConfig::new(ch, 2.0);
        let mut rng = child_rng(5, 2, 0);
        let p = sample_hybrid(&cfg, &mut rng).unwrap();
        for k in 0..=20 {
            assert_eq!(p.eval(k as f64 * 0.1).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn identical_atoms_track_max_jump() {
        let atoms = vec![
            Atom { u_mark: Some(1.0), v: 1.0, w: 0.0, mass: 0.6 },
            Atom { u_mark: Some(2.5), v: 2.5, w: 0.0, mass: 0.3 },
            Atom { u_mark: None, v: -1.0, w: 0.0, mass: 0.5 },
        ];
        let tail = TailFunction::from_marks(0.0, &[(1.0, 0.6), (2.5, 0.3)]);
        let ch = LimitCharacteristics::new(tail, JointJumpMeasure::Atoms { atoms }, 0.0, 0.0, 1.0).unwrap();
        let cfg = HybridSampleConfig::new(ch, 5.0);
        for i in 0..200 {
            let mut rng = child_rng(9, 2, i);
            let p = sample_hybrid(&cfg, &mut rng).unwrap();
            for k in 1..=50 {
                let t = k as f64 * 0.1;
                assert_eq!(p.path.eval_coord(t, 0).unwrap(), p.path.max_jump(t, 1).unwrap().max(0.0));
            }
        }
    }

    #[test]
    fn inconsistent_marks_rejected() {
        let atoms = vec![Atom { u_mark: Some(1.0), v: 0.0, w: 0.0, mass: 0.6 }];
        let ch =
            LimitCharacteristics::new(TailFunction::Frechet { alpha: 1.0, scale: 1.0 }, JointJumpMeasure::Atoms { atoms }, 0.0, 0.0, 1.0)
                .unwrap();
        let mut rng = child_rng(1, 1, 1);
        assert!(matches!(sample_hybrid(&HybridSampleConfig::new(ch, 1.0), &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn unit_drift_stopping_is_identity() {
        let ch = cp_gauss();
        let mut flat = ch.clone();
        flat.jumps = JointJumpMeasure::Atoms { atoms: vec![Atom { u_mark: None, v: 1.0, w: 0.0, mass: 1.0 }] };
        let flat = LimitCharacteristics::new(flat.tail, flat.jumps, 0.3, 0.0, 1.0).unwrap();
        let cfg = HybridSampleConfig::new(flat, 4.0);
        let mut rng = child_rng(4, 2, 0);
        let rows = sample_stopped_limit(&cfg, &[0.5, 1.0, 3.0], &mut rng).unwrap();
        for r in rows {
            assert!((r.tau - r.t).abs() < 1e-12 && (r.kappa - r.t).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_levels_rejected() {
        let atoms = vec![Atom { u_mark: None, v: 0.0, w: 1.0, mass: 1.0 }];
        let ch = LimitCharacteristics::new(TailFunction::ZeroAbove { threshold: 0.0 }, JointJumpMeasure::Atoms { atoms }, 0.0, 0.0, 0.0)
            .unwrap();
        let cfg = HybridSampleConfig::new(ch, 4.0);
        let mut rng = child_rng(4, 2, 0);
        assert!(matches!(sample_stopped_limit(&cfg, &[1.0], &mut rng), Err(Error::Domain(_))));
        let rows = sample_stopped_limit(&cfg, &[1.5], &mut rng).unwrap();
        assert_eq!(rows[0].kappa, 2.0);
    }

    #[test]
    fn factorized_frechet_stopped_max() {
        let ch =
            LimitCharacteristics::new(TailFunction::Frechet { alpha: 2.5, scale: 1.0 }, JointJumpMeasure::empty(), 5.0 / 3.0, 0.0, 1.0)
                .unwrap();
        let cfg = HybridSampleConfig::new(ch, 2.0);
        let n = 10_000;
        let mut below = 0usize;
        for i in 0..n {
            let mut rng = child_rng(8, 2, i);
            let r = sample_stopped_limit(&cfg, &[1.0], &mut rng).unwrap()[0];
            below += usize::from(r.xi <= 1.0);
        }
        let emp = below as f64 / n as f64;
        assert!((emp - (-1.0f64).exp()).abs() < 0.02, "{emp}");
    }
}
