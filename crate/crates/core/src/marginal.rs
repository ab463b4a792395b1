//! One-dimensional laws used as building blocks of array models.
//!
//! Every law is sampled through its upper quantile `x(s) = inf{x : P(X > x) ≤ s}`
//! of an open uniform `s`, so components driven by the same latent uniform are
//! comonotone and tail events `{X > x}` map to intervals `s < P(X > x)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Marginal {
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
    },
    /// `P(X > x) = (x / scale)^(−alpha)` for `x ≥ scale`.
    Pareto {
        alpha: f64,
        scale: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Gumbel {
        location: f64,
        scale: f64,
    },
    /// Zero except with probability `min(rate / n, 1)`, where it follows `inner`.
    Sparse {
        rate: f64,
        inner: Box<Marginal>,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Marginal::Constant { value } => value.is_finite(),
            Marginal::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Marginal::Exponential { rate } => *rate > 0.0 && rate.is_finite(),
            Marginal::Pareto { alpha, scale } => *alpha > 0.0 && *scale > 0.0 && scale.is_finite(),
            Marginal::Normal { mean, sd } => mean.is_finite() && *sd > 0.0 && sd.is_finite(),
            Marginal::Gumbel { location, scale } => location.is_finite() && *scale > 0.0,
            Marginal::Sparse { rate, inner } => {
                inner.validate()?;
                if matches!(**inner, Marginal::Sparse { .. }) {
                    return domain("nested sparse laws are not supported");
                }
                *rate > 0.0 && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid law parameters: {self:?}"))
        }
    }

    /// True when the law does not depend on `n`.
    pub fn is_static(&self) -> bool {
        !matches!(self, Marginal::Sparse { .. })
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Marginal::Constant { value } => *value >= 0.0,
            Marginal::Uniform { lo, .. } => *lo >= 0.0,
            Marginal::Exponential { .. } | Marginal::Pareto { .. } => true,
            Marginal::Normal { .. } | Marginal::Gumbel { .. } => false,
            Marginal::Sparse { inner, .. } => inner.is_nonnegative(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Constant { value } => *value,
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::Pareto { alpha, scale } => {
                if *alpha > 1.0 {
                    alpha * scale / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Marginal::Normal { mean, .. } => *mean,
            Marginal::Gumbel { location, scale } => location + scale * 0.577_215_664_901_532_9,
            Marginal::Sparse { .. } => f64::NAN,
        }
    }

    fn sparse_prob(rate: f64, n: f64) -> f64 {
        (rate / n).min(1.0)
    }

    /// `P(X > x)`.
    pub fn sf(&self, x: f64, n: f64) -> f64 {
        match self {
            Marginal::Constant { value } => f64::from(u8::from(*value > x)),
            Marginal::Uniform { lo, hi } => ((hi - x) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Marginal::Pareto { alpha, scale } => {
                if x <= *scale {
                    1.0
                } else {
                    (x / scale).powf(-alpha)
                }
            }
            Marginal::Normal { mean, sd } => normal(*mean, *sd).sf(x),
            Marginal::Gumbel { location, scale } => -(-(-(x - location) / scale).exp()).exp_m1(),
            Marginal::Sparse { rate, inner } => {
                let q = Self::sparse_prob(*rate, n);
                let zero = if x < 0.0 { 1.0 - q } else { 0.0 };
                zero + q * inner.sf(x, n)
            }
        }
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64, n: f64) -> f64 {
        match self {
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Marginal::Normal { mean, sd } => normal(*mean, *sd).cdf(x),
            Marginal::Gumbel { location, scale } => (-(-(x - location) / scale).exp()).exp(),
            Marginal::Sparse { rate, inner } => {
                let q = Self::sparse_prob(*rate, n);
                let zero = if x >= 0.0 { 1.0 - q } else { 0.0 };
                zero + q * inner.cdf(x, n)
            }
            _ => 1.0 - self.sf(x, n),
        }
    }

    /// Upper quantile: the value exceeded with probability `s ∈ (0, 1)`.
    pub fn upper_quantile(&self, s: f64, n: f64) -> f64 {
        match self {
            Marginal::Constant { value } => *value,
            Marginal::Uniform { lo, hi } => hi - s * (hi - lo),
            Marginal::Exponential { rate } => -s.ln() / rate,
            Marginal::Pareto { alpha, scale } => scale * s.powf(-1.0 / alpha),
            Marginal::Normal { mean, sd } => {
                if s < 0.5 {
                    mean - sd * std_normal_quantile(s)
                } else {
                    mean + sd * std_normal_quantile(1.0 - s)
                }
            }
            Marginal::Gumbel { location, scale } => location - scale * (-(-s).ln_1p()).ln(),
            Marginal::Sparse { rate, inner } => {
                let q = Self::sparse_prob(*rate, n);
                let above = q * inner.sf(0.0, n);
                if s < above {
                    inner.upper_quantile(s / q, n)
                } else if s < above + (1.0 - q) {
                    0.0
                } else {
                    inner.upper_quantile((s - (1.0 - q)) / q, n)
                }
            }
        }
    }

    /// Lower quantile `inf{x : P(X ≤ x) ≥ p}` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64, n: f64) -> f64 {
        match self {
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
            Marginal::Pareto { alpha, scale } => scale * (-(-p).ln_1p() / alpha).exp(),
            Marginal::Normal { mean, sd } => mean + sd * std_normal_quantile(p),
            Marginal::Gumbel { location, scale } => location - scale * (-p.ln()).ln(),
            Marginal::Sparse { rate, inner } => {
                let q = Self::sparse_prob(*rate, n);
                let below = q * inner.cdf(-f64::MIN_POSITIVE, n);
                if p <= below {
                    inner.quantile(p / q, n)
                } else if p <= below + (1.0 - q) {
                    0.0
                } else {
                    inner.quantile((p - (1.0 - q)) / q, n)
                }
            }
            _ => self.upper_quantile(1.0 - p, n),
        }
    }
}

fn normal(mean: f64, sd: f64) -> Normal {
    Normal::new(mean, sd).expect("validated normal parameters")
}

fn std_normal_quantile(p: f64) -> f64 {
    normal(0.0, 1.0).inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: f64 = 100.0;

    fn laws() -> Vec<Marginal> {
        vec![
            Marginal::Uniform { lo: -1.0, hi: 2.0 },
            Marginal::Exponential { rate: 2.0 },
            Marginal::Pareto { alpha: 1.5, scale: 1.0 },
            Marginal::Normal { mean: 1.0, sd: 2.0 },
            Marginal::Gumbel { location: 0.5, scale: 1.5 },
            Marginal::Sparse { rate: 5.0, inner: Box::new(Marginal::Exponential { rate: 1.0 }) },
        ]
    }

    #[test]
    fn quantiles_invert_tails() {
        for law in laws() {
            law.validate().unwrap();
            for s in [1e-9, 1e-3, 0.01, 0.2, 0.5, 0.7] {
                let x = law.upper_quantile(s, N);
                if law.is_static() {
                    assert!((law.sf(x, N) - s).abs() < 1e-9 * s.max(1e-3), "{law:?} s={s}");
                    let y = law.quantile(s, N);
                    assert!((law.cdf(y, N) - s).abs() < 1e-9, "{law:?} p={s}");
                } else {
                    assert!(law.sf(x, N) <= s + 1e-12);
                }
            }
        }
    }

    #[test]
    fn sparse_law_is_mostly_zero() {
        let law = Marginal::Sparse { rate: 5.0, inner: Box::new(Marginal::Exponential { rate: 1.0 }) };
        assert_eq!(law.upper_quantile(0.5, N), 0.0);
        assert!(law.upper_quantile(0.01, N) > 0.0);
        assert!((law.sf(0.0, N) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn pareto_tail_is_exact() {
        let law = Marginal::Pareto { alpha: 2.0, scale: 1.0 };
        assert_eq!(law.sf(4.0, N), 1.0 / 16.0);
        assert_eq!(law.upper_quantile(0.25, N), 2.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Marginal::Exponential { rate: 0.0 }.validate().is_err());
        assert!(Marginal::Uniform { lo: 1.0, hi: 1.0 }.validate().is_err());
    }
}
