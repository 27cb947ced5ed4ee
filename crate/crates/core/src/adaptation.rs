//! Growing and shrinking the number of active latent dimensions while the
//! chain runs.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{standard_normal, RngHandle, TruncGammaParams};
use crate::error::Result;
use crate::model::{HyperParams, LatentState};

/// One-sided 95% standard normal critical value.
pub const NORMAL_CRITICAL_95: f64 = 1.645;
/// Tail proportion above which the p = 1 rule adds a dimension.
pub const TAIL_PROPORTION: f64 = 0.05;

/// exp(−κ0 − κ1 s).
pub fn adapt_probability(s: u64, kappa0: f64, kappa1: f64) -> f64 {
    (-kappa0 - kappa1 * s as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptAction {
    None,
    Shrink,
    Grow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptDecision {
    pub action: AdaptAction,
    /// Variance share, 1/δp, or tail proportion, depending on the rule that
    /// was evaluated last.
    pub trigger: f64,
    pub iteration: u64,
}

/// Record of an applied (or attempted) adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptEvent {
    pub iteration: u64,
    pub action: AdaptAction,
    pub trigger: f64,
    pub old_p: usize,
    pub new_p: usize,
}

fn column_variances(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    z.column_iter()
        .map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}

/// Applies the shrink rule, then the grow rule, to the current positions.
pub fn decide(state: &LatentState, hp: &HyperParams, iteration: u64) -> AdaptDecision {
    let p = state.p();
    if p == 1 {
        let col = state.z.column(0);
        let m = col.mean();
        let limit = hp.eps3 * NORMAL_CRITICAL_95;
        let tail = col.iter().filter(|v| (*v - m).abs() > limit).count() as f64 / state.n() as f64;
        let action = if tail > TAIL_PROPORTION {
            AdaptAction::Grow
        } else {
            AdaptAction::None
        };
        return AdaptDecision {
            action,
            trigger: tail,
            iteration,
        };
    }
    let vars = column_variances(&state.z);
    let total: f64 = vars.iter().sum();
    let leading: f64 = vars[..p - 1].iter().sum();
    let share = if total > 0.0 { leading / total } else { 1.0 };
    if share > hp.eps1 {
        return AdaptDecision {
            action: AdaptAction::Shrink,
            trigger: share,
            iteration,
        };
    }
    let inv = 1.0 / state.delta[p - 1];
    AdaptDecision {
        action: if inv > hp.eps2 {
            AdaptAction::Grow
        } else {
            AdaptAction::None
        },
        trigger: inv,
        iteration,
    }
}

fn drop_last_column(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.columns(0, m.ncols() - 1).into_owned()
}

/// Carries out a decision in place and returns the event record.
pub fn apply(
    state: &mut LatentState,
    decision: &AdaptDecision,
    hp: &HyperParams,
    rng: &mut RngHandle,
) -> Result<AdaptEvent> {
    let old_p = state.p();
    match decision.action {
        AdaptAction::None => {}
        AdaptAction::Shrink => {
            if old_p == 1 {
                warn!("shrink requested at p = 1; ignored");
            } else {
                state.z = drop_last_column(&state.z);
                state.mu = drop_last_column(&state.mu);
                state.delta.pop();
                state.refresh_omega();
            }
        }
        AdaptAction::Grow => {
            let tg = TruncGammaParams::new(hp.a2, hp.b2, hp.t2)?;
            let d = tg.sample(rng)?;
            state.delta.push(d);
            state.refresh_omega();
            let w = state.omega[old_p];
            let z_sd = w.recip().sqrt();
            let mu_sd = (hp.xi / w).sqrt();
            let n = state.n();
            let g = state.components();
            let new_z: Vec<f64> = (0..n).map(|_| z_sd * standard_normal(rng)).collect();
            let new_mu: Vec<f64> = (0..g).map(|_| mu_sd * standard_normal(rng)).collect();
            state.z = state.z.clone().insert_column(old_p, 0.0);
            state.mu = state.mu.clone().insert_column(old_p, 0.0);
            for i in 0..n {
                state.z[(i, old_p)] = new_z[i];
            }
            for k in 0..g {
                state.mu[(k, old_p)] = new_mu[k];
            }
        }
    }
    Ok(AdaptEvent {
        iteration: decision.iteration,
        action: decision.action,
        trigger: decision.trigger,
        old_p,
        new_p: state.p(),
    })
}
