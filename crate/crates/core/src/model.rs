//! The generative model: hyperparameters, the latent state, the logistic
//! distance likelihood and the prior log-density.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    ln_dirichlet_pdf, ln_gamma_pdf, ln_normal_pdf, logpdf_diag_mvn_unchecked, TruncGammaParams,
};
use crate::error::{Error, Result};
use crate::netdata::AdjacencyMatrix;

/// Fixed model and sampler constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Gamma shape for δ1.
    pub a1: f64,
    /// Truncated-gamma shape for δh, h ≥ 2.
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    /// Left truncation point of the δh prior.
    pub t2: f64,
    /// Inflation of the component-mean prior covariance.
    pub xi: f64,
    /// Symmetric Dirichlet concentration on the mixing weights.
    pub nu: f64,
    pub mu_alpha: f64,
    pub var_alpha: f64,
    /// Initial number of latent dimensions.
    pub p0: usize,
    /// Number of mixture components.
    pub components: usize,
    pub kappa0: f64,
    pub kappa1: f64,
    /// Variance share that lets the last dimension be dropped.
    pub eps1: f64,
    /// Threshold on 1/δp for adding a dimension.
    pub eps2: f64,
    /// Tail multiplier for the p = 1 growth rule.
    pub eps3: f64,
    /// Position proposal step-size factor.
    pub step: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            a1: 2.0,
            a2: 3.0,
            b1: 1.0,
            b2: 1.0,
            t2: 1.0,
            xi: 9.0,
            nu: 0.01,
            mu_alpha: 0.0,
            var_alpha: 4.0,
            p0: 5,
            components: 20,
            kappa0: 4.0,
            kappa1: 5e-4,
            eps1: 0.8,
            eps2: 0.9,
            eps3: 5.0,
            step: 2.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("xi", self.xi),
            ("nu", self.nu),
            ("var_alpha", self.var_alpha),
            ("step", self.step),
            ("eps3", self.eps3),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t2 >= 0.0 && self.t2.is_finite()) {
            return Err(Error::InvalidConfig(format!("t2 must be nonnegative, got {}", self.t2)));
        }
        if !self.mu_alpha.is_finite() {
            return Err(Error::InvalidConfig("mu_alpha must be finite".into()));
        }
        if !(self.kappa0 >= 0.0 && self.kappa1 >= 0.0) {
            return Err(Error::InvalidConfig("kappa0, kappa1 must be nonnegative".into()));
        }
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            return Err(Error::InvalidConfig(format!("eps1 must lie in (0, 1), got {}", self.eps1)));
        }
        if !(self.eps2 > 0.0) {
            return Err(Error::InvalidConfig(format!("eps2 must be positive, got {}", self.eps2)));
        }
        if self.components < 2 {
            return Err(Error::InvalidConfig("at least 2 mixture components required".into()));
        }
        if self.p0 < 1 {
            return Err(Error::InvalidConfig("p0 must be at least 1".into()));
        }
        Ok(())
    }
}

/// ω_ℓ = δ1 · … · δℓ.
pub fn recompute_omega(delta: &[f64]) -> Vec<f64> {
    delta
        .iter()
        .scan(1.0, |acc, &d| {
            *acc *= d;
            Some(*acc)
        })
        .collect()
}

/// One full state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// n × p latent positions.
    pub z: DMatrix<f64>,
    /// Component index per node, 0-based.
    pub labels: Vec<usize>,
    pub tau: Vec<f64>,
    /// G × p component means.
    pub mu: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: f64,
}

impl LatentState {
    pub fn p(&self) -> usize {
        self.delta.len()
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn components(&self) -> usize {
        self.tau.len()
    }

    pub fn refresh_omega(&mut self) {
        self.omega = recompute_omega(&self.delta);
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    pub fn mean(&self, g: usize) -> Vec<f64> {
        self.mu.row(g).iter().copied().collect()
    }

    /// Number of nodes in each component.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.components()];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// Checks shapes, ω = cumprod(δ), δh ≥ t2 for h ≥ 2, τ on the simplex
    /// and label range.
    pub fn check_invariants(&self, t2: f64) -> Result<()> {
        let p = self.p();
        let g = self.components();
        if p == 0 {
            return Err(Error::DimensionMismatch("state has zero dimensions".into()));
        }
        if self.z.ncols() != p || self.mu.ncols() != p || self.omega.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "p = {p} but Z has {} columns, mu {}, omega {}",
                self.z.ncols(),
                self.mu.ncols(),
                self.omega.len()
            )));
        }
        if self.mu.nrows() != g || self.labels.len() != self.n() {
            return Err(Error::DimensionMismatch("component or node counts disagree".into()));
        }
        let expected = recompute_omega(&self.delta);
        for (l, (a, b)) in self.omega.iter().zip(&expected).enumerate() {
            if (a - b).abs() > 1e-12 * b.abs().max(1.0) {
                return Err(Error::Degenerate(format!(
                    "omega[{l}] = {a} differs from cumulative product {b}"
                )));
            }
        }
        if !(self.delta[0] > 0.0) {
            return Err(Error::Degenerate(format!("delta1 = {} is not positive", self.delta[0])));
        }
        if let Some((h, d)) = self.delta.iter().enumerate().skip(1).find(|(_, &d)| d < t2) {
            return Err(Error::Degenerate(format!("delta[{h}] = {d} below truncation {t2}")));
        }
        let total: f64 = self.tau.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.tau.iter().any(|&t| t < 0.0) {
            return Err(Error::Degenerate(format!("tau not on the simplex (sum {total})")));
        }
        if let Some(&c) = self.labels.iter().find(|&&c| c >= g) {
            return Err(Error::Degenerate(format!("label {c} out of range for G = {g}")));
        }
        if !self.alpha.is_finite() || self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha or positions".into()));
        }
        Ok(())
    }
}

/// ln(1 + e^x) without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// η = α − ‖zi − zj‖².
pub fn edge_log_odds(zi: &[f64], zj: &[f64], alpha: f64) -> Result<f64> {
    if zi.len() != zj.len() {
        return Err(Error::DimensionMismatch(format!(
            "positions of dimension {} and {}",
            zi.len(),
            zj.len()
        )));
    }
    Ok(alpha - sq_dist(zi, zj))
}

/// Row-major n × n matrix of squared latent distances.
pub fn pairwise_sq_dists(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows();
    let mut d = vec![0.0; n * n];
    for col in z.column_iter() {
        for i in 0..n {
            let zi = col[i];
            for j in (i + 1)..n {
                let diff = zi - col[j];
                d[i * n + j] += diff * diff;
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            d[j * n + i] = d[i * n + j];
        }
    }
    d
}

fn check_finite(z: &DMatrix<f64>, alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite(format!("alpha = {alpha}")));
    }
    if let Some((idx, v)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "position entry ({}, {}) = {v}",
            idx % z.nrows(),
            idx / z.nrows()
        )));
    }
    Ok(())
}

/// Σ_{i≠j} [ηij yij − ln(1 + e^ηij)].
pub fn log_likelihood(y: &AdjacencyMatrix, z: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if z.nrows() != y.n() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows for a network of {} nodes",
            z.nrows(),
            y.n()
        )));
    }
    check_finite(z, alpha)?;
    Ok(log_likelihood_from_dists(y, &pairwise_sq_dists(z), alpha))
}

/// Log-likelihood from a precomputed squared-distance matrix.
pub fn log_likelihood_from_dists(y: &AdjacencyMatrix, d2: &[f64], alpha: f64) -> f64 {
    let n = y.n();
    let mut acc = 0.0;
    for i in 0..n {
        let row = y.row(i);
        for j in (i + 1)..n {
            let eta = alpha - d2[i * n + j];
            let ties = (row[j] + y.get(j, i)) as f64;
            acc += eta * ties - 2.0 * log1p_exp(eta);
        }
    }
    acc
}

/// Log-likelihood terms of the dyads incident to node `i`, with `z_i`
/// replaced by `position`.
pub fn node_log_likelihood(
    y: &AdjacencyMatrix,
    z: &DMatrix<f64>,
    alpha: f64,
    i: usize,
    position: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let n = z.nrows();
    scratch.clear();
    scratch.resize(n, 0.0);
    for (l, col) in z.column_iter().enumerate() {
        let c = position[l];
        for (d, &zj) in scratch.iter_mut().zip(col.iter()) {
            let diff = zj - c;
            *d += diff * diff;
        }
    }
    let row = y.row(i);
    let mut acc = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        let eta = alpha - scratch[j];
        let ties = (row[j] + y.get(j, i)) as f64;
        acc += eta * ties - 2.0 * log1p_exp(eta);
    }
    acc
}

/// Log joint prior of the state (everything except the likelihood).
pub fn log_prior(state: &LatentState, hp: &HyperParams) -> f64 {
    let p = state.p();
    if state.delta.iter().skip(1).any(|&d| d < hp.t2) || state.delta[0] <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut lp = ln_normal_pdf(state.alpha, hp.mu_alpha, hp.var_alpha);

    let mut zi = vec![0.0; p];
    let mut mg = vec![0.0; p];
    for i in 0..state.n() {
        let c = state.labels[i];
        zi.iter_mut().zip(state.z.row(i).iter()).for_each(|(a, b)| *a = *b);
        mg.iter_mut().zip(state.mu.row(c).iter()).for_each(|(a, b)| *a = *b);
        lp += logpdf_diag_mvn_unchecked(&zi, &mg, &state.omega);
        lp += state.tau[c].ln();
    }

    lp += ln_dirichlet_pdf(&state.tau, &vec![hp.nu; state.components()]);

    let mean_prec: Vec<f64> = state.omega.iter().map(|w| w / hp.xi).collect();
    let zero = vec![0.0; p];
    for g in 0..state.components() {
        mg.iter_mut().zip(state.mu.row(g).iter()).for_each(|(a, b)| *a = *b);
        lp += logpdf_diag_mvn_unchecked(&mg, &zero, &mean_prec);
    }

    lp += ln_gamma_pdf(state.delta[0], hp.a1, hp.b1);
    if p > 1 {
        let tg = TruncGammaParams::new(hp.a2, hp.b2, hp.t2).expect("validated hyperparameters");
        for &d in &state.delta[1..] {
            lp += tg.ln_pdf(d);
        }
    }
    lp
}

/// Independent Bernoulli(logistic(ηij)) arcs for all i ≠ j.
pub fn simulate_network<R: Rng + ?Sized>(z: &DMatrix<f64>, alpha: f64, rng: &mut R) -> AdjacencyMatrix {
    let n = z.nrows();
    let d2 = pairwise_sq_dists(z);
    let mut y = AdjacencyMatrix::empty(n, true);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = logistic(alpha - d2[i * n + j]);
                if rng.random::<f64>() < q {
                    y.set(i, j, true).expect("i != j");
                }
            }
        }
    }
    y
}
