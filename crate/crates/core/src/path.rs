//! Exact càdlàg step paths with an optional linear drift.
//!
//! A [`CadlagPath`] stores, per coordinate, an initial value, a drift slope,
//! the jump sizes and the *base levels* after each jump. The value at `t` is
//! `level_k + drift * t` where `k` counts the jumps at times `≤ t`. Keeping
//! levels alongside sizes lets running maxima be stored bit-exactly while sum
//! coordinates keep their raw increments as jump sizes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};

/// Structural flag attached to each coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordFlag {
    Free,
    /// Nonnegative drift and nonnegative jumps.
    Nondecreasing,
    /// Zero drift and nonnegative jumps.
    RunningMax,
}

impl CoordFlag {
    pub fn is_monotone(self) -> bool {
        matches!(self, CoordFlag::Nondecreasing | CoordFlag::RunningMax)
    }
}

/// Outcome classification of a generalized inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseStatus {
    Interior,
    /// The level lies below the initial value; time 0 is returned.
    EmptyLevelSet,
    /// The coordinate never exceeds the level; the horizon is returned.
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inverse {
    pub time: f64,
    pub status: InverseStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    initial: Vec<f64>,
    drift: Vec<f64>,
    horizon: f64,
    flags: Vec<CoordFlag>,
    times: Vec<f64>,
    sizes: Vec<f64>,
    levels: Vec<f64>,
}

impl CadlagPath {
    /// Path with no jumps.
    pub fn constant(initial: Vec<f64>, drift: Vec<f64>, horizon: f64, flags: Vec<CoordFlag>) -> Result<Self> {
        Self::from_jumps(initial, drift, horizon, flags, Vec::new(), Vec::new())
    }

    /// Builds a path from jump sizes; levels are accumulated left to right.
    /// `sizes` is row-major with one row of length `dim` per jump time.
    pub fn from_jumps(
        initial: Vec<f64>,
        drift: Vec<f64>,
        horizon: f64,
        flags: Vec<CoordFlag>,
        times: Vec<f64>,
        sizes: Vec<f64>,
    ) -> Result<Self> {
        let dim = initial.len();
        if dim == 0 || sizes.len() != times.len() * dim {
            return contract("jump size rows must match dim and jump count");
        }
        let mut levels = Vec::with_capacity(sizes.len() + dim);
        levels.extend_from_slice(&initial);
        for k in 0..times.len() {
            for c in 0..dim {
                let prev = levels[k * dim + c];
                levels.push(prev + sizes[k * dim + c]);
            }
        }
        let path = Self { dim, initial, drift, horizon, flags, times, sizes, levels };
        path.validate()?;
        Ok(path)
    }

    /// Builds a path from post-jump base levels; sizes are the differences.
    pub fn from_levels(
        initial: Vec<f64>,
        drift: Vec<f64>,
        horizon: f64,
        flags: Vec<CoordFlag>,
        times: Vec<f64>,
        post_levels: Vec<f64>,
    ) -> Result<Self> {
        let dim = initial.len();
        if dim == 0 || post_levels.len() != times.len() * dim {
            return contract("level rows must match dim and jump count");
        }
        let mut levels = Vec::with_capacity(post_levels.len() + dim);
        levels.extend_from_slice(&initial);
        levels.extend_from_slice(&post_levels);
        let mut sizes = Vec::with_capacity(post_levels.len());
        for k in 0..times.len() {
            for c in 0..dim {
                sizes.push(levels[(k + 1) * dim + c] - levels[k * dim + c]);
            }
        }
        let path = Self { dim, initial, drift, horizon, flags, times, sizes, levels };
        path.validate()?;
        Ok(path)
    }

    /// Trusted constructor for builders that compute sizes and levels
    /// together (levels must equal the running sums up to rounding).
    pub(crate) fn from_parts(
        initial: Vec<f64>,
        drift: Vec<f64>,
        horizon: f64,
        flags: Vec<CoordFlag>,
        times: Vec<f64>,
        sizes: Vec<f64>,
        levels: Vec<f64>,
    ) -> Result<Self> {
        let dim = initial.len();
        if dim == 0 || sizes.len() != times.len() * dim || levels.len() != sizes.len() + dim {
            return contract("inconsistent path buffers");
        }
        let path = Self { dim, initial, drift, horizon, flags, times, sizes, levels };
        path.validate()?;
        Ok(path)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.drift.len() != d || self.flags.len() != d {
            return contract("drift and flags must have one entry per coordinate");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return contract(format!("horizon must be positive and finite, got {}", self.horizon));
        }
        if self.initial.iter().chain(&self.drift).chain(&self.sizes).chain(&self.levels).any(|x| !x.is_finite()) {
            return contract("path entries must be finite");
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.times {
            if !(t > prev) {
                return contract(format!("jump times must be strictly increasing (at {t})"));
            }
            if !(0.0..=self.horizon).contains(&t) {
                return contract(format!("jump time {t} outside [0, {}]", self.horizon));
            }
            prev = t;
        }
        for c in 0..d {
            let flag = self.flags[c];
            let bad_drift = match flag {
                CoordFlag::Free => false,
                CoordFlag::Nondecreasing => self.drift[c] < 0.0,
                CoordFlag::RunningMax => self.drift[c] != 0.0,
            };
            if bad_drift {
                return contract(format!("coordinate {c} drift {} violates flag {flag:?}", self.drift[c]));
            }
            if flag.is_monotone() && (0..self.times.len()).any(|k| self.sizes[k * d + c] < 0.0) {
                return contract(format!("coordinate {c} has a negative jump but is flagged {flag:?}"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }
    pub fn flags(&self) -> &[CoordFlag] {
        &self.flags
    }
    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }
    pub fn num_jumps(&self) -> usize {
        self.times.len()
    }
    /// Size row of the `k`-th jump (0-based).
    pub fn jump_row(&self, k: usize) -> &[f64] {
        &self.sizes[k * self.dim..(k + 1) * self.dim]
    }
    /// Base level row after `k` jumps; row 0 is the initial value.
    pub fn level_row(&self, k: usize) -> &[f64] {
        &self.levels[k * self.dim..(k + 1) * self.dim]
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return domain(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(())
    }

    fn check_coord(&self, c: usize) -> Result<()> {
        if c >= self.dim {
            return domain(format!("coordinate {c} out of range for dim {}", self.dim));
        }
        Ok(())
    }

    /// Number of jumps at times `≤ t`.
    fn count_upto(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    #[inline]
    fn value_at_index(&self, k: usize, c: usize, t: f64) -> f64 {
        let l = self.levels[k * self.dim + c];
        let d = self.drift[c];
        if d == 0.0 {
            l
        } else {
            l + d * t
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let k = self.count_upto(t);
        Ok((0..self.dim).map(|c| self.value_at_index(k, c, t)).collect())
    }

    pub fn eval_coord(&self, t: f64, c: usize) -> Result<f64> {
        self.check_time(t)?;
        self.check_coord(c)?;
        Ok(self.value_at_index(self.count_upto(t), c, t))
    }

    /// Left limit `x(t−)`; at `t = 0` this is the initial value.
    pub fn left_limit(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let k = self.times.partition_point(|&s| s < t);
        Ok((0..self.dim).map(|c| self.value_at_index(k, c, t)).collect())
    }

    pub fn jump_at(&self, s: f64) -> Result<Vec<f64>> {
        if !(s > 0.0 && s <= self.horizon) {
            return domain(format!("jump_at requires 0 < s ≤ {}, got {s}", self.horizon));
        }
        match self.times.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(k) => Ok(self.jump_row(k).to_vec()),
            Err(_) => Ok(vec![0.0; self.dim]),
        }
    }

    /// Largest jump of coordinate `c` over `(0, t]`, or 0 without jumps.
    pub fn max_jump(&self, t: f64, c: usize) -> Result<f64> {
        if !(t > 0.0 && t <= self.horizon) {
            return domain(format!("max_jump requires 0 < t ≤ {}, got {t}", self.horizon));
        }
        self.check_coord(c)?;
        let lo = self.times.partition_point(|&s| s <= 0.0);
        let hi = self.count_upto(t);
        Ok((lo..hi).map(|k| self.sizes[k * self.dim + c]).reduce(f64::max).unwrap_or(0.0))
    }

    /// `sup{s ∈ [0, horizon] : x_c(s) ≤ t}` for a monotone coordinate.
    pub fn generalized_inverse(&self, t: f64, c: usize) -> Result<Inverse> {
        self.check_coord(c)?;
        if !self.flags[c].is_monotone() {
            return contract(format!("coordinate {c} is not flagged nondecreasing"));
        }
        if t.is_nan() {
            return domain("level is NaN");
        }
        let d = self.dim;
        let drift = self.drift[c];
        if self.value_at_index(self.count_upto(0.0), c, 0.0) > t {
            return Ok(Inverse { time: 0.0, status: InverseStatus::EmptyLevelSet });
        }
        // Number of jumps whose post-jump value stays ≤ t.
        let m = self.times.len();
        let j = {
            let (mut lo, mut hi) = (0usize, m);
            while lo < hi {
                let mid = (lo + hi) / 2;
                let tm = self.times[mid];
                let v = self.levels[(mid + 1) * d + c] + if drift == 0.0 { 0.0 } else { drift * tm };
                if v <= t {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let seg_end = if j < m { self.times[j] } else { self.horizon };
        if drift > 0.0 {
            let base = self.levels[j * d + c];
            let cross = (t - base) / drift;
            if cross < seg_end {
                return Ok(Inverse { time: cross, status: InverseStatus::Interior });
            }
        }
        if j < m {
            Ok(Inverse { time: self.times[j], status: InverseStatus::Interior })
        } else {
            Ok(Inverse { time: self.horizon, status: InverseStatus::Truncated })
        }
    }

    /// Jump times with at least one nonzero component.
    pub fn effective_jump_times(&self) -> Vec<f64> {
        (0..self.times.len()).filter(|&k| self.jump_row(k).iter().any(|&x| x != 0.0)).map(|k| self.times[k]).collect()
    }

    /// Minimal gap between consecutive (nonzero) jump times inside `[lo, hi]`,
    /// or `hi − lo` when fewer than two such jumps exist.
    pub fn min_jump_gap(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && lo < hi && hi <= self.horizon) {
            return domain(format!("min_jump_gap requires 0 < T < T2 ≤ {}", self.horizon));
        }
        let pts: Vec<f64> = self.effective_jump_times().into_iter().filter(|&s| s >= lo && s <= hi).collect();
        if pts.len() < 2 {
            return Ok(hi - lo);
        }
        Ok(pts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
    }

    /// Replaces the horizon (must cover every jump time).
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut p = self.clone();
        p.horizon = horizon;
        p.validate()?;
        Ok(p)
    }

    /// Serializes to a JSON header and CSV body. The body has one row per
    /// jump: `time, size_1..size_dim, level_1..level_dim`, with 17
    /// significant digits so parsing restores every bit.
    pub fn to_records(&self) -> Result<(String, String)> {
        let header = PathHeader {
            dim: self.dim,
            initial: self.initial.clone(),
            drift: self.drift.clone(),
            horizon: self.horizon,
            flags: self.flags.clone(),
        };
        let json = serde_json::to_string_pretty(&header)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["time".to_string()];
        head.extend((1..=self.dim).map(|c| format!("size_{c}")));
        head.extend((1..=self.dim).map(|c| format!("level_{c}")));
        w.write_record(&head)?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.jump_row(k).iter().map(|&x| fmt17(x)));
            row.extend(self.level_row(k + 1).iter().map(|&x| fmt17(x)));
            w.write_record(&row)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Config(e.to_string()))?;
        Ok((json, body))
    }

    pub fn from_records(header_json: &str, body_csv: &str) -> Result<Self> {
        let h: PathHeader = serde_json::from_str(header_json)?;
        let mut r = csv::Reader::from_reader(body_csv.as_bytes());
        let mut times = Vec::new();
        let mut sizes = Vec::new();
        let mut levels = h.initial.clone();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 1 + 2 * h.dim {
                return Err(Error::Config(format!("path row has {} fields, expected {}", rec.len(), 1 + 2 * h.dim)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}")));
            times.push(parse(&rec[0])?);
            for c in 0..h.dim {
                sizes.push(parse(&rec[1 + c])?);
            }
            for c in 0..h.dim {
                levels.push(parse(&rec[1 + h.dim + c])?);
            }
        }
        Self::from_parts(h.initial, h.drift, h.horizon, h.flags, times, sizes, levels)
    }
}

#[derive(Serialize, Deserialize)]
struct PathHeader {
    dim: usize,
    initial: Vec<f64>,
    drift: Vec<f64>,
    horizon: f64,
    flags: Vec<CoordFlag>,
}

/// Decimal rendering with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// The path `t ↦ outer(stopping(t))`.
///
/// `stopping` must be a one-coordinate monotone path with values in
/// `[0, outer.horizon]`. Result jump times are the stopping jump times plus
/// the times at which the continuous part of `stopping` crosses a jump time
/// of `outer`; values at those times are evaluated directly.
pub fn compose(outer: &CadlagPath, stopping: &CadlagPath) -> Result<CadlagPath> {
    if stopping.dim != 1 || !stopping.flags[0].is_monotone() {
        return contract("stopping path must be one-dimensional and nondecreasing");
    }
    let s0 = stopping.eval_coord(0.0, 0)?;
    let s_end = stopping.eval_coord(stopping.horizon, 0)?;
    if s0 < 0.0 || s_end > outer.horizon {
        return domain(format!("stopping range [{s0}, {s_end}] leaves the outer domain [0, {}]", outer.horizon));
    }
    let r = stopping.drift[0];
    let mut cand: Vec<f64> = Vec::new();
    let ms = stopping.times.len();
    for j in 0..=ms {
        let start = if j == 0 { 0.0 } else { stopping.times[j - 1] };
        let end = if j < ms { stopping.times[j] } else { stopping.horizon };
        if j > 0 {
            cand.push(start);
        }
        if r > 0.0 {
            let base = stopping.levels[j];
            let lo = base + r * start;
            let hi = base + r * end;
            let a = outer.times.partition_point(|&x| x <= lo);
            let b = outer.times.partition_point(|&x| x <= hi);
            for &tk in &outer.times[a..b] {
                let t = ((tk - base) / r).clamp(start, end);
                cand.push(t);
            }
        }
    }
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    cand.retain(|&t| t > 0.0 || stopping.times.first() == Some(&0.0));

    let dim = outer.dim;
    let drift: Vec<f64> = outer.drift.iter().map(|&d| d * r).collect();
    let at = |t: f64| -> Result<Vec<f64>> {
        let s = stopping.eval_coord(t, 0)?.clamp(0.0, outer.horizon);
        outer.eval(s)
    };
    let base_of =
        |vals: Vec<f64>, t: f64| -> Vec<f64> { vals.iter().zip(&drift).map(|(&v, &d)| if d == 0.0 { v } else { v - d * t }).collect() };
    let initial = base_of(at(0.0)?, 0.0);
    let mut levels = initial.clone();
    let mut sizes = Vec::with_capacity(cand.len() * dim);
    for (k, &t) in cand.iter().enumerate() {
        let b = base_of(at(t)?, t);
        for c in 0..dim {
            let prev = levels[k * dim + c];
            let mut jump = b[c] - prev;
            if outer.flags[c].is_monotone() && jump < 0.0 {
                jump = 0.0;
            }
            sizes.push(jump);
        }
        levels.extend(b);
    }
    CadlagPath::from_parts(initial, drift, stopping.horizon, outer.flags.clone(), cand, sizes, levels)
}

/// Restriction of a path to `[lo, hi]` as segments with constant base level.
struct Segments {
    bounds: Vec<f64>,
    /// Row-major, `dim` values per segment.
    values: Vec<f64>,
    dim: usize,
    drift: Vec<f64>,
}

impl Segments {
    fn new(path: &CadlagPath, lo: f64, hi: f64, coords: &[usize]) -> Self {
        let first = path.count_upto(lo);
        let last = path.count_upto(hi);
        let dim = coords.len();
        let mut bounds = Vec::with_capacity(last - first + 2);
        bounds.push(lo);
        bounds.extend_from_slice(&path.times[first..last]);
        bounds.push(hi);
        let mut values = Vec::with_capacity((last - first + 1) * dim);
        for k in first..=last {
            values.extend(coords.iter().map(|&c| path.levels[k * path.dim + c]));
        }
        let drift = coords.iter().map(|&c| path.drift[c]).collect();
        Self { bounds, values, dim, drift }
    }

    fn count(&self) -> usize {
        self.bounds.len() - 1
    }
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    fn start(&self, i: usize) -> f64 {
        self.bounds[i]
    }
    fn end(&self, i: usize) -> f64 {
        self.bounds[i + 1]
    }
    fn has_drift(&self) -> bool {
        self.drift.iter().any(|&d| d != 0.0)
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_window(path: &CadlagPath, c: f64, lo: f64, hi: f64, coords: &[usize]) -> Result<()> {
    if !(lo > 0.0 && lo < hi && hi <= path.horizon) || !(c > 0.0) {
        return domain(format!("moduli require c > 0 and 0 < T < T2 ≤ {}", path.horizon));
    }
    if coords.is_empty() {
        return domain("empty coordinate set");
    }
    for &k in coords {
        path.check_coord(k)?;
    }
    Ok(())
}

/// Uniform modulus `sup_{|t′−t″| ≤ c, T ≤ t′ ≤ t″ ≤ T2} |x(t′) − x(t″)|`
/// with the Euclidean norm over `coords`.
pub fn modulus_u(path: &CadlagPath, c: f64, lo: f64, hi: f64, coords: &[usize]) -> Result<f64> {
    check_window(path, c, lo, hi, coords)?;
    let seg = Segments::new(path, lo, hi, coords);
    let n = seg.count();
    let mut best: f64 = 0.0;
    for j in 0..n {
        for k in j..n {
            let (dmin, dmax) = if k == j {
                (0.0, c.min(seg.end(j) - seg.start(j)))
            } else {
                let gap = seg.start(k) - seg.end(j);
                if gap >= c {
                    break;
                }
                (gap.max(0.0), c.min(seg.end(k) - seg.start(j)))
            };
            if dmin > dmax {
                continue;
            }
            for d in [dmin, dmax] {
                let v: f64 = seg
                    .row(k)
                    .iter()
                    .zip(seg.row(j))
                    .zip(&seg.drift)
                    .map(|((&a, &b), &s)| {
                        let x = a - b + s * d;
                        x * x
                    })
                    .sum::<f64>()
                    .sqrt();
                best = best.max(v);
            }
        }
    }
    Ok(best)
}

/// J-modulus `sup min(|x(t′) − x(t)|, |x(t″) − x(t)|)` over
/// `T ∨ (t−c) ≤ t′ ≤ t ≤ t″ ≤ (t+c) ∧ T2`, Euclidean norm over `coords`.
pub fn modulus_j(path: &CadlagPath, c: f64, lo: f64, hi: f64, coords: &[usize]) -> Result<f64> {
    check_window(path, c, lo, hi, coords)?;
    let seg = Segments::new(path, lo, hi, coords);
    if seg.has_drift() {
        Ok(modulus_j_drift(&seg, c))
    } else {
        Ok(modulus_j_step(&seg, c, f64::INFINITY))
    }
}

/// `modulus_j(..) ≥ delta`, stopping as soon as the bound is reached.
pub fn modulus_j_at_least(path: &CadlagPath, c: f64, lo: f64, hi: f64, coords: &[usize], delta: f64) -> Result<bool> {
    check_window(path, c, lo, hi, coords)?;
    let seg = Segments::new(path, lo, hi, coords);
    if seg.has_drift() {
        Ok(modulus_j_drift(&seg, c) >= delta)
    } else {
        Ok(modulus_j_step(&seg, c, delta) >= delta)
    }
}

/// Sparse table answering range max/min per coordinate in O(1).
/// Coordinate ranges over a sliding run of segment indices whose ends only
/// move forward, kept with monotone deques.
struct SlidingRange {
    dim: usize,
    max: Vec<VecDeque<usize>>,
    min: Vec<VecDeque<usize>>,
}

impl SlidingRange {
    fn new(dim: usize) -> Self {
        Self { dim, max: vec![VecDeque::new(); dim], min: vec![VecDeque::new(); dim] }
    }

    fn push(&mut self, seg: &Segments, i: usize) {
        for (c, &x) in seg.row(i).iter().enumerate() {
            let q = &mut self.max[c];
            while q.back().is_some_and(|&k| seg.row(k)[c] <= x) {
                q.pop_back();
            }
            q.push_back(i);
            let q = &mut self.min[c];
            while q.back().is_some_and(|&k| seg.row(k)[c] >= x) {
                q.pop_back();
            }
            q.push_back(i);
        }
    }

    fn drop_before(&mut self, lo: usize) {
        for q in self.max.iter_mut().chain(self.min.iter_mut()) {
            while q.front().is_some_and(|&k| k < lo) {
                q.pop_front();
            }
        }
    }

    /// Euclidean norm of the per-coordinate ranges over the current run.
    fn spread(&self, seg: &Segments) -> f64 {
        let mut s = 0.0;
        for c in 0..self.dim {
            let hi = seg.row(self.max[c][0])[c];
            let lo = seg.row(self.min[c][0])[c];
            s += (hi - lo) * (hi - lo);
        }
        s.sqrt()
    }
}

/// Exact `Δ_J` of a step path when `stop_at` is infinite. Otherwise the
/// result is only guaranteed to be `≥ stop_at` exactly when `Δ_J` is.
fn modulus_j_step(seg: &Segments, c: f64, stop_at: f64) -> f64 {
    let n = seg.count();
    if n < 3 {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    let mut left = Vec::new();
    let mut right = Vec::new();
    // Segment i is [b_i, b_{i+1}); segments j < i reachable from t iff
    // t < b_{j+1} + c; segments k > i reachable iff b_k ≤ t + c.
    let mut jlo = 0usize;
    let mut khi = 0usize;
    let mut lwin = SlidingRange::new(seg.dim);
    let mut rwin = SlidingRange::new(seg.dim);
    lwin.push(seg, 0);
    rwin.push(seg, 0);
    for i in 1..n - 1 {
        let (s, e) = (seg.start(i), seg.end(i));
        lwin.push(seg, i);
        while jlo < i && !(s < seg.end(jlo) + c) {
            jlo += 1;
        }
        lwin.drop_before(jlo);
        while khi < i {
            khi += 1;
            rwin.push(seg, khi);
        }
        while khi + 1 < n && seg.start(khi + 1) < e + c {
            khi += 1;
            rwin.push(seg, khi);
        }
        rwin.drop_before(i);
        if jlo >= i || khi <= i {
            continue;
        }
        let bound = lwin.spread(seg).min(rwin.spread(seg));
        if bound <= best || (stop_at.is_finite() && bound < stop_at) {
            continue;
        }
        // left[m] = max_{j ∈ [jlo + m, i)} |v_j − v_i|, right[m] = max over (i, i + 1 + m].
        let vi = seg.row(i);
        left.clear();
        left.resize(i - jlo, 0.0);
        let mut acc: f64 = 0.0;
        for j in (jlo..i).rev() {
            acc = acc.max(norm_diff(seg.row(j), vi));
            left[j - jlo] = acc;
        }
        right.clear();
        acc = 0.0;
        for k in i + 1..=khi {
            acc = acc.max(norm_diff(seg.row(k), vi));
            right.push(acc);
        }
        // Evaluation points: s and every entry point b_k − c inside (s, e).
        // Between them the right side is fixed and the left side shrinks.
        let mut jl = jlo;
        let mut kr = i;
        let mut t = s;
        loop {
            while jl < i && !(t < seg.end(jl) + c) {
                jl += 1;
            }
            if jl >= i {
                break;
            }
            while kr < khi && seg.start(kr + 1) <= t + c {
                kr += 1;
            }
            if kr > i {
                best = best.max(left[jl - jlo].min(right[kr - i - 1]));
                if best >= stop_at {
                    return best;
                }
            }
            if kr >= khi {
                break;
            }
            let next = seg.start(kr + 1) - c;
            if next >= e {
                break;
            }
            t = next.max(t);
            // Segment kr + 1 enters here even if rounding hides it from the test above.
            kr += 1;
        }
    }
    best
}

/// General step+drift case: for each segment triple (j ≤ i ≤ k) the
/// objective `min(|Δ_ji − D d1|, |Δ_ki + D d2|)` is maximized over the
/// feasible polygon in `(d1, d2) = (t − t′, t″ − t)`. Each norm is convex in
/// its own variable, so the optimum sits at a vertex or at a crossing of the
/// two norms along an edge; both are enumerated in closed form.
fn modulus_j_drift(seg: &Segments, c: f64) -> f64 {
    let n = seg.count();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (0..=i).rev() {
            if j < i && seg.start(i) - seg.end(j) >= c {
                break;
            }
            for k in i..n {
                if k > i && seg.start(k) - seg.end(i) >= c {
                    break;
                }
                let v = triple_value(seg, c, j, i, k);
                best = best.max(v);
            }
        }
    }
    best
}

fn triple_value(seg: &Segments, c: f64, j: usize, i: usize, k: usize) -> f64 {
    let n = seg.count();
    let (bi0, bi1) = (seg.start(i), seg.end(i));
    let (bj0, bj1) = (seg.start(j), seg.end(j));
    let (bk0, bk1) = (seg.start(k), seg.end(k));
    // t ∈ [L, U] with L = max(bi0, bj0 + d1, bk0 − d2), U = min(bi1, bj1 + d1, bk1 − d2).
    // Constraints a·(d1, d2) ≤ b collected from every (lower, upper) pair.
    let lowers = [(0.0, 0.0, bi0), (1.0, 0.0, bj0), (0.0, -1.0, bk0)];
    let uppers = [(0.0, 0.0, bi1), (1.0, 0.0, bj1), (0.0, -1.0, bk1)];
    let mut cons: Vec<(f64, f64, f64)> = Vec::with_capacity(13);
    for lw in &lowers {
        for up in &uppers {
            // lw.0 d1 + lw.1 d2 + lw.2 ≤ up.0 d1 + up.1 d2 + up.2
            cons.push((lw.0 - up.0, lw.1 - up.1, up.2 - lw.2));
        }
    }
    cons.push((-1.0, 0.0, 0.0));
    cons.push((0.0, -1.0, 0.0));
    cons.push((1.0, 0.0, c));
    cons.push((0.0, 1.0, c));
    let scale = 1.0 + bi1.abs().max(bk1.abs());
    let tol = 1e-12 * scale;
    let feasible = |p: (f64, f64)| cons.iter().all(|&(a1, a2, b)| a1 * p.0 + a2 * p.1 <= b + tol);
    let mut verts: Vec<(f64, f64)> = Vec::new();
    for x in 0..cons.len() {
        for y in x + 1..cons.len() {
            let (a1, a2, b1) = cons[x];
            let (c1, c2, b2) = cons[y];
            let det = a1 * c2 - a2 * c1;
            if det == 0.0 {
                continue;
            }
            let p = ((b1 * c2 - a2 * b2) / det, (a1 * b2 - b1 * c1) / det);
            if feasible(p) {
                verts.push(p);
            }
        }
    }
    if verts.is_empty() {
        return 0.0;
    }
    // Strict feasibility: the half-open segment ends must be avoidable.
    let cx = verts.iter().map(|p| p.0).sum::<f64>() / verts.len() as f64;
    let cy = verts.iter().map(|p| p.1).sum::<f64>() / verts.len() as f64;
    let lo_t = bi0.max(bj0 + cx).max(bk0 - cy);
    let hi_t = bi1.min(bj1 + cx).min(bk1 - cy);
    let t = 0.5 * (lo_t + hi_t);
    let last = n - 1;
    let strict_ok = (i == last || t < bi1 - tol) && (j == last || t - cx < bj1 - tol) && (k == last || t + cy < bk1 - tol);
    if !strict_ok {
        return 0.0;
    }
    let dji: Vec<f64> = seg.row(j).iter().zip(seg.row(i)).map(|(a, b)| a - b).collect();
    let dki: Vec<f64> = seg.row(k).iter().zip(seg.row(i)).map(|(a, b)| a - b).collect();
    let f = |d1: f64| dji.iter().zip(&seg.drift).map(|(&a, &s)| (a - s * d1) * (a - s * d1)).sum::<f64>().sqrt();
    let g = |d2: f64| dki.iter().zip(&seg.drift).map(|(&a, &s)| (a + s * d2) * (a + s * d2)).sum::<f64>().sqrt();
    let objective = |p: (f64, f64)| f(p.0).min(g(p.1));
    let mut best = verts.iter().map(|&p| objective(p)).fold(0.0, f64::max);
    // Edge crossings f = g: squared norms are quadratics in the edge parameter.
    for a in 0..verts.len() {
        for b in a + 1..verts.len() {
            let (p, q) = (verts[a], verts[b]);
            let mid = (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
            let on_edge = cons.iter().any(|&(a1, a2, bb)| {
                (a1 * p.0 + a2 * p.1 - bb).abs() <= tol
                    && (a1 * q.0 + a2 * q.1 - bb).abs() <= tol
                    && (a1 * mid.0 + a2 * mid.1 - bb).abs() <= tol
            });
            if !on_edge {
                continue;
            }
            for s in crossing_params(&dji, &dki, &seg.drift, p, q) {
                let x = (p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1));
                best = best.max(objective(x));
            }
        }
    }
    best
}

/// Roots in [0, 1] of |A − D d1(s)|² − |B + D d2(s)|² along the segment p→q.
fn crossing_params(a: &[f64], b: &[f64], drift: &[f64], p: (f64, f64), q: (f64, f64)) -> Vec<f64> {
    // d1(s) = p.0 + s (q.0 − p.0), d2(s) = p.1 + s (q.1 − p.1)
    let (mut c2, mut c1, mut c0) = (0.0, 0.0, 0.0);
    for ((&ai, &bi), &di) in a.iter().zip(b).zip(drift) {
        // A − D d1 = (ai − di p.0) − s di (q.0 − p.0)
        let (u0, u1) = (ai - di * p.0, -di * (q.0 - p.0));
        let (w0, w1) = (bi + di * p.1, di * (q.1 - p.1));
        c2 += u1 * u1 - w1 * w1;
        c1 += 2.0 * (u0 * u1 - w0 * w1);
        c0 += u0 * u0 - w0 * w0;
    }
    let mut roots = Vec::new();
    if c2.abs() < 1e-300 {
        if c1 != 0.0 {
            roots.push(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            roots.push((-c1 - sq) / (2.0 * c2));
            roots.push((-c1 + sq) / (2.0 * c2));
        }
    }
    roots.into_iter().filter(|s| (0.0..=1.0).contains(s)).collect()
}
