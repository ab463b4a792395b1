//! Adaptive Gauss–Kronrod (7/15) quadrature with global bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-15, max_subdivisions: 1 << 16 }
    }
}

impl QuadConfig {
    /// Tighter setting used where two quadrature routes are compared.
    pub fn strict() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-15, max_subdivisions: 1 << 16 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]`; `b` may be `+∞`, in which case the
/// substitution `s = a + x/(1−x)` maps the half-line onto `[0, 1)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<f64> {
    if !(a.is_finite()) || b.is_nan() {
        return Err(Error::Numeric(format!("bad integration bounds [{a}, {b}]")));
    }
    if b <= a {
        return Ok(0.0);
    }
    if b.is_infinite() {
        let g = move |x: f64| {
            if x >= 1.0 {
                return 0.0;
            }
            let om = 1.0 - x;
            let s = a + x / om;
            let v = f(s) / (om * om);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        return integrate_finite(&g, 0.0, 1.0, cfg);
    }
    integrate_finite(&f, a, b, cfg)
}

fn integrate_finite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: QuadConfig) -> Result<f64> {
    let (v, e) = kronrod(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut pieces = 1usize;
    loop {
        if !total.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok(total);
        }
        if pieces >= cfg.max_subdivisions {
            return Err(Error::Numeric(format!(
                "quadrature on [{a}, {b}] stopped at {pieces} subdivisions: estimate {total:e}, error {err:e}"
            )));
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer splittable in floating point; accept it.
            err -= worst.error;
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = kronrod(f, worst.a, mid);
        let (v2, e2) = kronrod(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        pieces += 1;
        if err < 0.0 {
            err = heap.iter().map(|p| p.error).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x, 0.0, 3.0, QuadConfig::default()).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
    }

    #[test]
    fn half_line_exponential() {
        let v = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, QuadConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity() {
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, QuadConfig::strict()).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn power_tail_on_half_line() {
        // ∫_1^∞ 1.5 s^{-2.5} ds = 1
        let v = integrate(|s| 1.5 * s.powf(-2.5), 1.0, f64::INFINITY, QuadConfig::strict()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }
}
