//! Left-truncated gamma distribution.
//!
//! Draws use plain rejection from the untruncated gamma when the retained
//! mass is at least [`REJECTION_MASS`], and otherwise invert the conditional
//! CDF through the regularized upper incomplete gamma function, solving in
//! log space with a bracketed Newton iteration.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Retained mass above which rejection sampling is used.
pub const REJECTION_MASS: f64 = 0.1;

/// Retained mass below which the distribution is treated as unsampleable.
pub const MIN_MASS: f64 = 1e-300;

const MAX_REJECTIONS: usize = 1000;

/// Gamma(shape, rate) conditioned on X ≥ truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGammaParams {
    shape: f64,
    rate: f64,
    truncation: f64,
}

impl TruncGammaParams {
    pub fn new(shape: f64, rate: f64, truncation: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma shape {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma rate {rate}")));
        }
        if !(truncation >= 0.0 && truncation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "truncation point {truncation}"
            )));
        }
        Ok(Self {
            shape,
            rate,
            truncation,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Upper regularized incomplete gamma Q(a, x), with Q(a, 0) = 1.
    fn upper(a: f64, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            gamma_ur(a, x)
        }
    }

    /// P(X ≥ t) under the untruncated gamma.
    pub fn retained_mass(&self) -> f64 {
        Self::upper(self.shape, self.rate * self.truncation)
    }

    pub fn mean(&self) -> f64 {
        let bt = self.rate * self.truncation;
        self.shape / self.rate * Self::upper(self.shape + 1.0, bt) / Self::upper(self.shape, bt)
    }

    pub fn variance(&self) -> f64 {
        let bt = self.rate * self.truncation;
        let a = self.shape;
        let q = Self::upper(a, bt);
        let second = a * (a + 1.0) / (self.rate * self.rate) * Self::upper(a + 2.0, bt) / q;
        let m = self.mean();
        second - m * m
    }

    /// Conditional CDF on [t, ∞).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.truncation {
            return 0.0;
        }
        let bt = self.rate * self.truncation;
        1.0 - Self::upper(self.shape, self.rate * x) / Self::upper(self.shape, bt)
    }

    /// Log density on the support (−∞ below the truncation point).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.truncation {
            return f64::NEG_INFINITY;
        }
        super::ln_gamma_pdf(x, self.shape, self.rate) - self.retained_mass().ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let mass = self.retained_mass();
        if mass < MIN_MASS {
            return Err(Error::TruncationMassUnderflow {
                shape: self.shape,
                rate: self.rate,
                truncation: self.truncation,
                mass,
            });
        }
        if mass >= REJECTION_MASS {
            let gamma = Gamma::new(self.shape, 1.0 / self.rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for _ in 0..MAX_REJECTIONS {
                let x = gamma.sample(rng);
                if x >= self.truncation {
                    return Ok(x);
                }
            }
        }
        self.sample_inverse_cdf(rng)
    }

    /// Inverse-CDF draw regardless of the retained mass.
    pub fn sample_inverse_cdf<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let mass = self.retained_mass();
        if mass < MIN_MASS {
            return Err(Error::TruncationMassUnderflow {
                shape: self.shape,
                rate: self.rate,
                truncation: self.truncation,
                mass,
            });
        }
        // v in (0, 1]; solve Q(a, y) = v · Q(a, bt) for standardized y = b·x.
        let v: f64 = 1.0 - rng.random::<f64>();
        let target = mass.ln() + v.ln();
        let y = solve_upper_tail(self.shape, self.rate * self.truncation, target);
        Ok((y / self.rate).max(self.truncation))
    }
}

/// Finds y ≥ lo with ln Q(a, y) = target, where ln Q(a, lo) ≥ target.
fn solve_upper_tail(a: f64, lo: f64, target: f64) -> f64 {
    let ln_norm = ln_gamma(a);
    let g = |y: f64| -> f64 {
        let q = TruncGammaParams::upper(a, y);
        if q > 0.0 {
            q.ln() - target
        } else {
            f64::NEG_INFINITY
        }
    };
    // d/dy ln Q = −pdf(y) / Q(y)
    let slope = |y: f64, gy: f64| -> f64 {
        let ln_pdf = (a - 1.0) * y.ln() - y - ln_norm;
        -(ln_pdf - (gy + target)).exp()
    };

    let mut lo = lo;
    let mut g_lo = g(lo);
    if g_lo <= 0.0 {
        return lo;
    }
    let mut step = (a.sqrt()).max(1.0);
    let mut hi = lo + step;
    let mut g_hi = g(hi);
    while g_hi > 0.0 {
        lo = hi;
        g_lo = g_hi;
        step *= 2.0;
        hi = lo + step;
        g_hi = g(hi);
    }

    let mut y = if g_lo.is_finite() && lo > 0.0 {
        lo - g_lo / slope(lo, g_lo)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        if !(y > lo && y < hi) {
            y = 0.5 * (lo + hi);
        }
        let gy = g(y);
        if gy == 0.0 {
            return y;
        }
        if gy > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let next = if gy.is_finite() {
            y - gy / slope(y, gy)
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 1e-15 * y.abs().max(1.0) {
            return next.clamp(lo, hi);
        }
        y = next;
    }
    0.5 * (lo + hi)
}
