//! Random variate generation and log-densities used by the sampler.

mod rng;
mod truncgamma;

pub use rng::RngHandle;
pub use truncgamma::{TruncGammaParams, MIN_MASS, REJECTION_MASS};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_precisions(precisions: &[f64]) -> Result<()> {
    match precisions.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        Some(w) => Err(Error::InvalidParameter(format!(
            "precision {w} is not strictly positive"
        ))),
        None => Ok(()),
    }
}

/// Draws from MVN(mean, diag(precisions)^{-1}).
pub fn sample_diag_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    precisions: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mean.len() != precisions.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} coordinates, precisions {}",
            mean.len(),
            precisions.len()
        )));
    }
    check_precisions(precisions)?;
    Ok(mean
        .iter()
        .zip(precisions)
        .map(|(&m, &w)| {
            let e: f64 = StandardNormal.sample(rng);
            m + e / w.sqrt()
        })
        .collect())
}

/// Standard normal variate.
#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, rate) variate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma shape {shape}, rate {rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(g.sample(rng))
}

/// log of a Gamma(shape, 1) variate, accurate for tiny shapes where the
/// variate itself underflows.
fn sample_ln_gamma_unit<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape checked positive");
        g.sample(rng).ln()
    } else {
        // G(a) = G(a + 1) · U^{1/a}
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape checked positive");
        let u: f64 = 1.0 - rng.random::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Dirichlet draw computed in log space, so concentrations as small as
/// 1e-5 produce exact zeros rather than NaN.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentrations: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentrations.is_empty() {
        return Err(Error::InvalidParameter("empty Dirichlet".into()));
    }
    if let Some(a) = concentrations.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "Dirichlet concentration {a} is not strictly positive"
        )));
    }
    let logs: Vec<f64> = concentrations
        .iter()
        .map(|&a| sample_ln_gamma_unit(a, rng))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Index drawn with probability proportional to `weights` (0-based).
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(
            "categorical weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("all categorical weights are zero".into()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (g, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = g;
            if u < acc {
                return Ok(g);
            }
        }
    }
    Ok(last_positive)
}

/// log φ_p(x; mean, diag(precisions)^{-1}).
pub fn logpdf_diag_mvn(x: &[f64], mean: &[f64], precisions: &[f64]) -> Result<f64> {
    if x.len() != mean.len() || x.len() != precisions.len() {
        return Err(Error::DimensionMismatch(format!(
            "x: {}, mean: {}, precisions: {}",
            x.len(),
            mean.len(),
            precisions.len()
        )));
    }
    check_precisions(precisions)?;
    Ok(logpdf_diag_mvn_unchecked(x, mean, precisions))
}

/// [`logpdf_diag_mvn`] without validation, for the sampler's inner loops.
#[inline]
pub fn logpdf_diag_mvn_unchecked(x: &[f64], mean: &[f64], precisions: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &mi), &w) in x.iter().zip(mean).zip(precisions) {
        let d = xi - mi;
        acc += w.ln() - w * d * d;
    }
    0.5 * (acc - x.len() as f64 * LN_2PI)
}

/// log N(x; mean, variance).
pub fn ln_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + d * d / variance)
}

/// log Gamma(x; shape, rate).
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// log Dir(x; concentrations).
pub fn ln_dirichlet_pdf(x: &[f64], concentrations: &[f64]) -> f64 {
    let total: f64 = concentrations.iter().sum();
    let mut acc = ln_gamma(total);
    for (&xi, &a) in x.iter().zip(concentrations) {
        acc -= ln_gamma(a);
        if a != 1.0 {
            acc += (a - 1.0) * xi.ln();
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mvn_moments() {
        let mut rng = RngHandle::new(1, 0);
        let n = 100_000;
        let mut s = [0.0; 2];
        for _ in 0..n {
            let x = sample_diag_mvn(&[0.0, 0.0], &[1.0, 1.0], &mut rng).unwrap();
            s[0] += x[0];
            s[1] += x[1];
        }
        assert!((s[0] / n as f64).abs() < 0.02 && (s[1] / n as f64).abs() < 0.02);

        let mut ss = 0.0;
        let mut m = 0.0;
        for _ in 0..n {
            let x = sample_diag_mvn(&[0.0], &[4.0], &mut rng).unwrap()[0];
            m += x;
            ss += x * x;
        }
        let mean = m / n as f64;
        let var = ss / n as f64 - mean * mean;
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }

    #[test]
    fn mvn_deterministic_and_validated() {
        let a = sample_diag_mvn(&[1.0, 2.0], &[1.0, 3.0], &mut RngHandle::new(9, 9)).unwrap();
        let b = sample_diag_mvn(&[1.0, 2.0], &[1.0, 3.0], &mut RngHandle::new(9, 9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_diag_mvn(&[0.0], &[0.0], &mut RngHandle::new(0, 0)).is_err());
        assert!(sample_diag_mvn(&[0.0], &[-1.0], &mut RngHandle::new(0, 0)).is_err());
    }

    fn dirichlet_means(conc: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngHandle::new(seed, 0);
        let mut acc = vec![0.0; conc.len()];
        for _ in 0..n {
            let t = sample_dirichlet(conc, &mut rng).unwrap();
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(t.iter().all(|&v| v >= 0.0));
            for (a, v) in acc.iter_mut().zip(&t) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / n as f64).collect()
    }

    #[test]
    fn dirichlet_symmetric_mean() {
        for m in dirichlet_means(&[10.0, 10.0, 10.0], 100_000, 2) {
            assert!((m - 1.0 / 3.0).abs() < 0.005);
        }
    }

    #[test]
    fn dirichlet_asymmetric_mean() {
        let conc = [10.01, 5.01, 0.01];
        let total: f64 = conc.iter().sum();
        let means = dirichlet_means(&conc, 100_000, 3);
        for (m, a) in means.iter().zip(conc) {
            assert!((m - a / total).abs() < 0.005, "{m} vs {}", a / total);
        }
    }

    #[test]
    fn dirichlet_tiny_concentration() {
        let mut rng = RngHandle::new(4, 0);
        let n = 10_000;
        let mut zeros = 0;
        for _ in 0..n {
            let t = sample_dirichlet(&[1.0, 1.0, 1e-5], &mut rng).unwrap();
            assert!(t.iter().all(|v| v.is_finite()));
            if t[2] < 1e-300 {
                zeros += 1;
            }
        }
        assert!(zeros as f64 > 0.99 * n as f64, "{zeros}");
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn dirichlet_marginal_is_beta() {
        // Marginal of component 0 is Beta(2, 5): mean 2/7, var 10/(49·8).
        let mut rng = RngHandle::new(5, 0);
        let n = 200_000;
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n {
            let t = sample_dirichlet(&[2.0, 1.5, 3.5], &mut rng).unwrap();
            s += t[0];
            ss += t[0] * t[0];
        }
        let mean = s / n as f64;
        let var = ss / n as f64 - mean * mean;
        assert!((mean - 2.0 / 7.0).abs() < 0.002);
        assert!((var - 10.0 / 392.0).abs() / (10.0 / 392.0) < 0.02);
    }

    #[test]
    fn categorical_cases() {
        let mut rng = RngHandle::new(6, 0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_categorical(&[2.0, 1.0, 1.0], &mut rng).unwrap()] += 1;
        }
        let expect = [0.5, 0.25, 0.25];
        for (c, e) in counts.iter().zip(expect) {
            assert!((*c as f64 / n as f64 - e).abs() < 0.005);
        }
        let mut counts = [0usize; 2];
        for _ in 0..n {
            counts[sample_categorical(&[1.0, 1.0], &mut rng).unwrap()] += 1;
        }
        assert!((counts[0] as f64 / n as f64 - 0.5).abs() < 0.005);
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn mvn_logpdf_values() {
        let v = logpdf_diag_mvn(&[0.0], &[0.0], &[1.0]).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
        let joint = logpdf_diag_mvn(&[0.3, -1.2], &[0.1, 0.4], &[2.0, 0.5]).unwrap();
        let a = logpdf_diag_mvn(&[0.3], &[0.1], &[2.0]).unwrap();
        let b = logpdf_diag_mvn(&[-1.2], &[0.4], &[0.5]).unwrap();
        assert!((joint - a - b).abs() < 1e-12);
        let shifted = logpdf_diag_mvn(&[1.3, 0.8], &[1.1, 2.4], &[2.0, 0.5]).unwrap();
        assert!((joint - shifted).abs() < 1e-12);
        assert!(logpdf_diag_mvn(&[0.0], &[0.0], &[0.0]).is_err());
        assert!(logpdf_diag_mvn(&[0.0, 1.0], &[0.0], &[1.0]).is_err());
    }
}
