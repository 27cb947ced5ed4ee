//! Starting state for a chain: classical scaling of geodesic distances, a
//! logistic distance regression to fix scale and intercept, a Gaussian
//! mixture for the labels and empirical precisions for the shrinkage.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_diag_mvn, standard_normal, RngHandle};
use crate::error::{Error, Result};
use crate::model::{recompute_omega, HyperParams, LatentState};
use crate::netdata::{density, geodesic_distances, AdjacencyMatrix, GeodesicMatrix};

/// Largest magnitude allowed for the distance coefficient.
pub const BETA_CAP: f64 = 1e3;
/// Variance substituted for a constant column.
pub const MIN_COLUMN_VARIANCE: f64 = 1e-6;
const TAU_FLOOR: f64 = 1e-6;
const EM_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub eigenvalues: Vec<f64>,
    pub clusters_found: usize,
    pub rescale: f64,
    /// The regression hit the coefficient cap.
    pub separated: bool,
    /// The distance predictor was constant, so β̂ is unidentified.
    pub constant_predictor: bool,
}

/// Classical scaling of a distance matrix into `p0` coordinates, ordered by
/// decreasing eigenvalue. Returns the coordinates and the retained
/// eigenvalues.
pub fn classical_mds(d: &DMatrix<f64>, p0: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::DimensionMismatch("distance matrix is not square".into()));
    }
    if p0 == 0 {
        return Err(Error::InvalidParameter("p0 must be at least 1".into()));
    }
    let mut b = d.map(|v| -0.5 * v * v);
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n.max(1) as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    if n < p0 {
        warn!("{n} nodes but {p0} dimensions requested; padding with zero columns");
    }
    let mut coords = DMatrix::zeros(n, p0);
    let mut values = vec![0.0; p0];
    for (l, &k) in order.iter().take(p0).enumerate() {
        let lambda = eig.eigenvalues[k];
        values[l] = lambda;
        let scale = lambda.max(0.0).sqrt();
        for i in 0..n {
            coords[(i, l)] = eig.eigenvectors[(i, k)] * scale;
        }
    }
    Ok((coords, values))
}

/// Result of the logistic regression of ties on negative squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRegression {
    pub alpha: f64,
    pub beta: f64,
    pub separated: bool,
    pub constant_predictor: bool,
}

/// Maximum-likelihood fit of logit P(y_ij = 1) = α − β‖zi − zj‖² by Newton
/// iterations (IRLS) on the dyad-aggregated binomial data.
pub fn fit_logistic_distance_regression(y: &AdjacencyMatrix, z: &DMatrix<f64>) -> Result<DistanceRegression> {
    let n = y.n();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch(format!("Z has {} rows, network {n} nodes", z.nrows())));
    }
    let dens = density(y)?;
    if dens <= 0.0 || dens >= 1.0 {
        return Err(Error::InvalidNetwork(format!(
            "network density {dens} leaves the regression unidentified"
        )));
    }
    let d2 = crate::model::pairwise_sq_dists(z);
    let mut xs = Vec::with_capacity(n * (n - 1) / 2);
    let mut ts = Vec::with_capacity(xs.capacity());
    for i in 0..n {
        for j in (i + 1)..n {
            xs.push(-d2[i * n + j]);
            ts.push((y.get(i, j) + y.get(j, i)) as f64);
        }
    }
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if xmax - xmin <= 1e-12 * xmax.abs().max(1.0) {
        warn!("distance predictor is constant; distance coefficient set to 0");
        return Ok(DistanceRegression {
            alpha: (dens / (1.0 - dens)).ln(),
            beta: 0.0,
            separated: false,
            constant_predictor: true,
        });
    }

    // With one predictor, separation means the tie and non-tie pairs occupy
    // disjoint predictor ranges; the likelihood then increases without bound.
    let (mut lo_tie, mut hi_tie, mut lo_non, mut hi_non) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&x, &t) in xs.iter().zip(&ts) {
        if t > 0.0 {
            lo_tie = lo_tie.min(x);
            hi_tie = hi_tie.max(x);
        }
        if t < 2.0 {
            lo_non = lo_non.min(x);
            hi_non = hi_non.max(x);
        }
    }
    let separated_at = if hi_non <= lo_tie {
        Some((BETA_CAP, 0.5 * (hi_non + lo_tie)))
    } else if hi_tie <= lo_non {
        Some((-BETA_CAP, 0.5 * (hi_tie + lo_non)))
    } else {
        None
    };
    if let Some((beta, cut)) = separated_at {
        warn!("distance regression is separated; capping |beta| at {BETA_CAP}");
        return Ok(DistanceRegression {
            alpha: -beta * cut,
            beta,
            separated: true,
            constant_predictor: false,
        });
    }

    let loglik = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ts)
            .map(|(&x, &t)| {
                let eta = a + b * x;
                t * eta - 2.0 * crate::model::log1p_exp(eta)
            })
            .sum()
    };
    let mut a = (dens / (1.0 - dens)).ln();
    let mut b = 0.0;
    let mut current = loglik(a, b);
    let mut separated = false;
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &t) in xs.iter().zip(&ts) {
            let q = crate::model::logistic(a + b * x);
            let r = t - 2.0 * q;
            let w = 2.0 * q * (1.0 - q);
            ga += r;
            gb += r * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        if (ga * ga + gb * gb).sqrt() < 1e-8 {
            break;
        }
        let det = haa * hbb - hab * hab;
        if !(det > 0.0) || !det.is_finite() {
            separated = true;
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (na, nb) = (a + step * da, b + step * db);
            let cand = loglik(na, nb);
            if cand >= current - 1e-12 * current.abs() {
                a = na;
                b = nb;
                current = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if b.abs() > BETA_CAP {
            separated = true;
            break;
        }
    }
    if separated || b.abs() > BETA_CAP {
        warn!("distance regression looks separated; capping |beta| at {BETA_CAP}");
        separated = true;
        b = b.clamp(-BETA_CAP, BETA_CAP);
    }
    Ok(DistanceRegression {
        alpha: a,
        beta: b,
        separated,
        constant_predictor: false,
    })
}

/// Centres columns and multiplies by √|β̂|.
pub fn rescale_positions(z: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let s = beta.abs().sqrt();
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let m = col.mean();
        col.apply(|v| *v = (*v - m) * s);
    }
    out
}

fn column_variances(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows();
    z.column_iter()
        .map(|c| {
            if n < 2 {
                return 0.0;
            }
            let m = c.mean();
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
        })
        .collect()
}

/// δ and ω from the empirical column precisions, with δh clamped at `t2`
/// for h ≥ 2 so the state lies in the prior support.
pub fn init_shrinkage(z: &DMatrix<f64>, t2: f64) -> (Vec<f64>, Vec<f64>) {
    let vars = column_variances(z);
    let prec: Vec<f64> = vars
        .iter()
        .enumerate()
        .map(|(l, &v)| {
            if v > 0.0 && v.is_finite() {
                1.0 / v
            } else {
                warn!("column {} has zero variance; using {MIN_COLUMN_VARIANCE}", l + 1);
                1.0 / MIN_COLUMN_VARIANCE
            }
        })
        .collect();
    let mut delta = Vec::with_capacity(prec.len());
    for (l, &w) in prec.iter().enumerate() {
        if l == 0 {
            delta.push(w);
        } else {
            delta.push((w / prec[l - 1]).max(t2));
        }
    }
    let omega = recompute_omega(&delta);
    (delta, omega)
}

/// Outcome of one shared-diagonal-covariance mixture fit.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub k: usize,
    pub labels: Vec<usize>,
    pub means: DMatrix<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    pub loglik: f64,
    pub bic: f64,
}

fn kmeanspp_centres(z: &DMatrix<f64>, k: usize, rng: &mut RngHandle) -> DMatrix<f64> {
    let n = z.nrows();
    let p = z.ncols();
    let mut centres = DMatrix::zeros(k, p);
    let first = rng.random_range(0..n);
    centres.set_row(0, &z.row(first));
    let mut best = vec![f64::INFINITY; n];
    for c in 1..k {
        for i in 0..n {
            let d = (z.row(i) - centres.row(c - 1)).norm_squared();
            best[i] = best[i].min(d);
        }
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if u < b {
                    idx = i;
                    break;
                }
                u -= b;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.set_row(c, &z.row(pick));
    }
    centres
}

fn em_once(z: &DMatrix<f64>, mut means: DMatrix<f64>, var_floor: &[f64]) -> Option<MixtureFit> {
    let (n, p) = (z.nrows(), z.ncols());
    let k = means.nrows();
    let mut weights = vec![1.0 / k as f64; k];
    let mut vars: Vec<f64> = column_variances(z).iter().zip(var_floor).map(|(v, f)| v.max(*f)).collect();
    let mut resp = DMatrix::zeros(n, k);
    let mut prev = f64::NEG_INFINITY;
    let mut loglik = f64::NEG_INFINITY;
    for _ in 0..500 {
        // E step.
        let log_det: f64 = vars.iter().map(|v| v.ln()).sum();
        let base = -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        loglik = 0.0;
        for i in 0..n {
            let mut row = vec![0.0; k];
            for g in 0..k {
                let mut q = 0.0;
                for l in 0..p {
                    let d = z[(i, l)] - means[(g, l)];
                    q += d * d / vars[l];
                }
                row[g] = weights[g].ln() + base - 0.5 * q;
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            loglik += m + s.ln();
            for g in 0..k {
                resp[(i, g)] = (row[g] - m).exp() / s;
            }
        }
        // M step.
        let sizes: Vec<f64> = (0..k).map(|g| resp.column(g).sum()).collect();
        if sizes.iter().any(|&s| s < 1.0) {
            return None;
        }
        for g in 0..k {
            weights[g] = sizes[g] / n as f64;
            for l in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += resp[(i, g)] * z[(i, l)];
                }
                means[(g, l)] = acc / sizes[g];
            }
        }
        for l in 0..p {
            let mut acc = 0.0;
            for i in 0..n {
                for g in 0..k {
                    let d = z[(i, l)] - means[(g, l)];
                    acc += resp[(i, g)] * d * d;
                }
            }
            let v = acc / n as f64;
            if !(v > var_floor[l]) {
                return None;
            }
            vars[l] = v;
        }
        if (loglik - prev).abs() <= 1e-9 * loglik.abs().max(1.0) {
            break;
        }
        prev = loglik;
    }
    if !loglik.is_finite() {
        return None;
    }
    let labels = (0..n).map(|i| resp.row(i).transpose().argmax().0).collect();
    let npar = (k - 1) + k * p + p;
    let bic = 2.0 * loglik - npar as f64 * (n as f64).ln();
    Some(MixtureFit {
        k,
        labels,
        means,
        variances: vars,
        weights,
        loglik,
        bic,
    })
}

/// Shared diagonal covariance mixture fit for `k` components, with up to
/// ten restarts from jittered centres when a fit degenerates.
pub fn fit_mixture(z: &DMatrix<f64>, k: usize, rng: &mut RngHandle) -> Option<MixtureFit> {
    let n = z.nrows();
    if k == 0 || k > n {
        return None;
    }
    let col_vars = column_variances(z);
    let total: f64 = col_vars.iter().sum::<f64>().max(1e-300);
    let floor: Vec<f64> = col_vars.iter().map(|_| 1e-8 * total / col_vars.len() as f64).collect();
    if k == 1 {
        let means = DMatrix::from_fn(1, z.ncols(), |_, l| z.column(l).mean());
        return em_once(z, means, &floor);
    }
    let centres = kmeanspp_centres(z, k, rng);
    let mut best = em_once(z, centres.clone(), &floor);
    let jitter: Vec<f64> = col_vars.iter().map(|v| 0.1 * v.max(1e-12).sqrt()).collect();
    let mut restarts = 0;
    while best.is_none() && restarts < EM_RESTARTS {
        restarts += 1;
        let mut jittered = kmeanspp_centres(z, k, rng);
        for mut row in jittered.row_iter_mut() {
            for l in 0..row.len() {
                row[l] += jitter[l] * standard_normal(rng);
            }
        }
        best = em_once(z, jittered, &floor);
    }
    // One extra start guards against a poor local optimum.
    if let Some(ref b) = best {
        let other = em_once(z, kmeanspp_centres(z, k, rng), &floor);
        if let Some(o) = other {
            if o.loglik > b.loglik {
                best = Some(o);
            }
        }
    }
    best
}

/// Fits 1..=max_k components and returns the fit with the highest BIC.
pub fn init_clustering(z: &DMatrix<f64>, max_k: usize, rng: &mut RngHandle) -> MixtureFit {
    let n = z.nrows();
    let spread: f64 = column_variances(z).iter().sum();
    let single = || MixtureFit {
        k: 1,
        labels: vec![0; n],
        means: DMatrix::from_fn(1, z.ncols(), |_, l| if n > 0 { z.column(l).mean() } else { 0.0 }),
        variances: vec![0.0; z.ncols()],
        weights: vec![1.0],
        loglik: 0.0,
        bic: f64::NEG_INFINITY,
    };
    if n < 2 || !(spread > 0.0) {
        return single();
    }
    let mut best: Option<MixtureFit> = None;
    for k in 1..=max_k.min(n) {
        if let Some(fit) = fit_mixture(z, k, rng) {
            if best.as_ref().is_none_or(|b| fit.bic > b.bic) {
                best = Some(fit);
            }
        }
    }
    let mut fit = best.unwrap_or_else(single);
    compact_labels(&mut fit);
    fit
}

/// Drops components that received no hard assignment.
fn compact_labels(fit: &mut MixtureFit) {
    let mut used: Vec<usize> = fit.labels.clone();
    used.sort_unstable();
    used.dedup();
    if used.len() == fit.k {
        return;
    }
    let mut map = vec![usize::MAX; fit.k];
    for (new, &old) in used.iter().enumerate() {
        map[old] = new;
    }
    fit.labels.iter_mut().for_each(|c| *c = map[*c]);
    fit.means = DMatrix::from_fn(used.len(), fit.means.ncols(), |g, l| fit.means[(used[g], l)]);
    fit.weights = used.iter().map(|&g| fit.weights[g]).collect();
    fit.k = used.len();
}

/// Full initialization of a chain's state.
pub fn initialize(y: &AdjacencyMatrix, hp: &HyperParams, rng: &mut RngHandle) -> Result<(LatentState, InitReport)> {
    hp.validate()?;
    let geo: GeodesicMatrix = geodesic_distances(y);
    let (z0, eigenvalues) = classical_mds(&geo.to_matrix(), hp.p0)?;
    let reg = fit_logistic_distance_regression(y, &z0)?;
    let z = rescale_positions(&z0, reg.beta);
    let fit = init_clustering(&z, hp.components, rng);
    let (delta, omega) = init_shrinkage(&z, hp.t2);

    let g_total = hp.components;
    let p = hp.p0;
    let n = y.n();
    let mut mu = DMatrix::zeros(g_total, p);
    for g in 0..fit.k.min(g_total) {
        mu.set_row(g, &fit.means.row(g));
    }
    let prior_prec: Vec<f64> = omega.iter().map(|w| w / hp.xi).collect();
    let zero = vec![0.0; p];
    for g in fit.k..g_total {
        let m = sample_diag_mvn(&zero, &prior_prec, rng)?;
        for l in 0..p {
            mu[(g, l)] = m[l];
        }
    }
    let mut tau = vec![0.0; g_total];
    for &c in &fit.labels {
        tau[c] += 1.0 / n as f64;
    }
    tau.iter_mut().for_each(|t| *t = t.max(TAU_FLOOR));
    let s: f64 = tau.iter().sum();
    tau.iter_mut().for_each(|t| *t /= s);

    let state = LatentState {
        z,
        labels: fit.labels.clone(),
        tau,
        mu,
        delta,
        omega,
        alpha: reg.alpha,
    };
    state.check_invariants(hp.t2)?;
    let report = InitReport {
        alpha_hat: reg.alpha,
        beta_hat: reg.beta,
        eigenvalues,
        clusters_found: fit.k,
        rescale: reg.beta.abs().sqrt(),
        separated: reg.separated,
        constant_predictor: reg.constant_predictor,
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::adjusted_rand_index;
    use crate::model::{log_prior, simulate_network};
    use crate::netdata::AdjacencyMatrix;

    fn euclid(z: &DMatrix<f64>) -> DMatrix<f64> {
        let n = z.nrows();
        DMatrix::from_fn(n, n, |i, j| (z.row(i) - z.row(j)).norm())
    }

    #[test]
    fn mds_collinear_points() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let (x, ev) = classical_mds(&d, 1).unwrap();
        let sign = -x[(0, 0)].signum();
        assert!((x[(0, 0)] * sign + 1.0).abs() < 1e-10);
        assert!(x[(1, 0)].abs() < 1e-10);
        assert!((x[(2, 0)] * sign - 1.0).abs() < 1e-10);
        assert!((ev[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn mds_zero_and_padding() {
        let (x, _) = classical_mds(&DMatrix::zeros(4, 4), 2).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
        let (x, ev) = classical_mds(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 5).unwrap();
        assert_eq!(x.ncols(), 5);
        assert_eq!(ev.len(), 5);
    }

    #[test]
    fn mds_round_trips_euclidean_distances() {
        let mut rng = RngHandle::new(41, 0);
        for p in 1..=3 {
            let z = DMatrix::from_fn(15, p, |_, _| standard_normal(&mut rng));
            let d = euclid(&z);
            let (x, _) = classical_mds(&d, 3).unwrap();
            assert!((euclid(&x) - d).abs().max() < 1e-8);
        }
    }

    #[test]
    fn mds_columns_have_nonincreasing_variance() {
        let mut rng = RngHandle::new(42, 0);
        let z = DMatrix::from_fn(30, 4, |_, l| (4 - l) as f64 * standard_normal(&mut rng));
        let (x, _) = classical_mds(&euclid(&z), 4).unwrap();
        let v = column_variances(&x);
        assert!(v.windows(2).all(|w| w[0] >= w[1] - 1e-10));
    }

    fn planted_network(rng: &mut RngHandle, n: usize, alpha: f64) -> (AdjacencyMatrix, DMatrix<f64>) {
        let z = DMatrix::from_fn(n, 2, |_, _| standard_normal(rng));
        (simulate_network(&z, alpha, rng), z)
    }

    #[test]
    fn regression_recovers_planted_coefficients() {
        let mut rng = RngHandle::new(43, 0);
        let (y, z) = planted_network(&mut rng, 200, 2.0);
        let fit = fit_logistic_distance_regression(&y, &z).unwrap();
        assert!((fit.alpha - 2.0).abs() < 0.3, "{fit:?}");
        assert!((fit.beta - 1.0).abs() < 0.3, "{fit:?}");
        // Doubling squared distances halves the coefficient.
        let scaled = &z * 2f64.sqrt();
        let refit = fit_logistic_distance_regression(&y, &scaled).unwrap();
        assert!((refit.beta - fit.beta / 2.0).abs() < 1e-6);
        assert!((refit.alpha - fit.alpha).abs() < 1e-6);
    }

    #[test]
    fn regression_fixed_point_after_rescaling() {
        let mut rng = RngHandle::new(44, 0);
        let (y, z) = planted_network(&mut rng, 80, 1.0);
        let z = &z * 0.4;
        let fit = fit_logistic_distance_regression(&y, &z).unwrap();
        let rescaled = rescale_positions(&z, fit.beta);
        let refit = fit_logistic_distance_regression(&y, &rescaled).unwrap();
        assert!((refit.beta - 1.0).abs() < 1e-6);
    }

    #[test]
    fn regression_degenerate_inputs() {
        let y = AdjacencyMatrix::empty(4, true);
        let z = DMatrix::zeros(4, 1);
        assert!(fit_logistic_distance_regression(&y, &z).is_err());
        let mut y = AdjacencyMatrix::empty(4, true);
        y.set(0, 1, true).unwrap();
        y.set(2, 3, true).unwrap();
        let fit = fit_logistic_distance_regression(&y, &z).unwrap();
        assert!(fit.constant_predictor);
        assert_eq!(fit.beta, 0.0);
        let dens = 2.0 / 12.0;
        assert!((fit.alpha - (dens / (1.0 - dens) as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn regression_caps_separation() {
        // Ties exactly between the close pairs.
        let z = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 5.0, 5.1]);
        let mut y = AdjacencyMatrix::empty(4, false);
        y.set(0, 1, true).unwrap();
        y.set(2, 3, true).unwrap();
        let fit = fit_logistic_distance_regression(&y, &z).unwrap();
        assert!(fit.separated);
        assert!(fit.beta.abs() <= BETA_CAP);
    }

    #[test]
    fn rescale_examples() {
        let z = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        assert_eq!(rescale_positions(&z, 1.0), z);
        let z = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(rescale_positions(&z, 4.0), DMatrix::from_row_slice(2, 1, &[-2.0, 2.0]));
    }

    #[test]
    fn shrinkage_examples() {
        // Column variances (1, 0.5).
        let z = DMatrix::from_row_slice(3, 2, &[-1.0, -0.5f64.sqrt(), 0.0, 0.0, 1.0, 0.5f64.sqrt()]);
        let (d, w) = init_shrinkage(&z, 1.0);
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
        assert!((d[0] - 1.0).abs() < 1e-12 && (d[1] - 2.0).abs() < 1e-12);

        let z = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
        let (d, w) = init_shrinkage(&z, 1.0);
        assert!((d[1] - 1.0).abs() < 1e-12 && (d[2] - 1.0).abs() < 1e-12);
        let cp = recompute_omega(&d);
        assert!(cp.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-12 * b));

        // Decreasing precision is clamped at the truncation point.
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 3.0, 2.0, 6.0]);
        let (d, _) = init_shrinkage(&z, 1.0);
        assert_eq!(d[1], 1.0);

        let z = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        let (_, w) = init_shrinkage(&z, 1.0);
        assert!((w[1] / w[0] - 1.0 / MIN_COLUMN_VARIANCE).abs() < 1e-3 / MIN_COLUMN_VARIANCE);
    }

    fn two_blobs(rng: &mut RngHandle) -> (DMatrix<f64>, Vec<usize>) {
        let truth: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let z = DMatrix::from_fn(60, 2, |i, l| {
            let centre = if truth[i] == 0 { -6.0 } else { 6.0 };
            (if l == 0 { centre } else { 0.0 }) + standard_normal(rng)
        });
        (z, truth)
    }

    #[test]
    fn clustering_finds_two_blobs() {
        let mut rng = RngHandle::new(45, 0);
        let (z, truth) = two_blobs(&mut rng);
        let fit = init_clustering(&z, 20, &mut rng);
        assert_eq!(fit.k, 2);
        assert_eq!(adjusted_rand_index(&fit.labels, &truth).unwrap(), 1.0);

        let mut shifted = z.clone();
        shifted.add_scalar_mut(100.0);
        let fit2 = init_clustering(&shifted, 20, &mut RngHandle::new(45, 0));
        let fit1 = init_clustering(&z, 20, &mut RngHandle::new(45, 0));
        assert_eq!(adjusted_rand_index(&fit1.labels, &fit2.labels).unwrap(), 1.0);
    }

    #[test]
    fn clustering_identical_points() {
        let mut rng = RngHandle::new(46, 0);
        let fit = init_clustering(&DMatrix::from_element(10, 2, 1.5), 20, &mut rng);
        assert_eq!(fit.k, 1);
    }

    #[test]
    fn initialize_gives_valid_state() {
        let mut rng = RngHandle::new(47, 0);
        let (y, _) = planted_network(&mut rng, 40, 1.0);
        let hp = HyperParams::default();
        let (state, report) = initialize(&y, &hp, &mut RngHandle::new(1, 0)).unwrap();
        state.check_invariants(hp.t2).unwrap();
        assert!(log_prior(&state, &hp).is_finite());
        assert_eq!(report.eigenvalues.len(), hp.p0);
        assert!(report.rescale >= 0.0);
        assert_eq!(state.tau.len(), hp.components);
        let (again, _) = initialize(&y, &hp, &mut RngHandle::new(1, 0)).unwrap();
        assert_eq!(state, again);
    }
}
