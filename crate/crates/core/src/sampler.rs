//! Metropolis-within-Gibbs sampler: one sweep updates component means,
//! weights, labels, positions, the intercept and the shrinkage parameters,
//! after which the number of dimensions may be adapted.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt_probability, apply, decide, AdaptAction, AdaptEvent};
use crate::distributions::{
    sample_categorical, sample_dirichlet, sample_gamma, standard_normal, RngHandle, TruncGammaParams,
};
use crate::error::{Error, Result};
use crate::init::{initialize, InitReport};
use crate::model::{log1p_exp, log_likelihood_from_dists, pairwise_sq_dists, HyperParams, LatentState};
use crate::netdata::AdjacencyMatrix;

/// Target acceptance rate of the intercept random walk during burn-in.
pub const ALPHA_TARGET_ACCEPTANCE: f64 = 0.25;
/// Target acceptance rate of the position moves during burn-in.
pub const POSITION_TARGET_ACCEPTANCE: f64 = 0.3;
const TUNE_BATCH: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    /// Random stream id; distinct chains use distinct streams.
    pub stream: u64,
    pub hp: HyperParams,
    pub adapt_dimensions: bool,
    /// Tune the position step factor k during burn-in, starting from
    /// `hp.step`; otherwise k stays at `hp.step`.
    pub tune_step: bool,
    /// Starting standard deviation of the intercept random walk.
    pub alpha_step: f64,
}

impl ChainConfig {
    pub fn new(iterations: u64, burn_in: u64, thin: u64, seed: u64, hp: HyperParams) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            seed,
            stream: 0,
            hp,
            adapt_dimensions: true,
            tune_step: true,
            alpha_step: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning interval must be at least 1".into()));
        }
        if !(self.alpha_step > 0.0) {
            return Err(Error::InvalidConfig("alpha step must be positive".into()));
        }
        self.hp.validate()
    }

    /// Whether iteration `s` (1-based) is stored.
    pub fn is_stored(&self, s: u64) -> bool {
        s > self.burn_in && (s - self.burn_in) % self.thin == 0
    }
}

/// One stored draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub iteration: u64,
    pub loglik: f64,
    pub state: LatentState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceCounter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

/// Output of a chain.
#[derive(Debug, Clone)]
pub struct PosteriorTrace {
    pub samples: Vec<Sample>,
    pub z_acceptance: AcceptanceCounter,
    pub alpha_acceptance: AcceptanceCounter,
    /// Positions with the highest log-likelihood seen during burn-in.
    pub reference: DMatrix<f64>,
    pub reference_loglik: f64,
    pub adapt_events: Vec<AdaptEvent>,
    pub init_report: InitReport,
    pub alpha_step: f64,
    /// Position step factor k used after burn-in.
    pub position_step: f64,
}

/// Scale of a random-walk proposal, adjusted after every batch of 50
/// updates while tuning is on, toward a target acceptance rate.
#[derive(Debug, Clone)]
pub struct ScaleTuning {
    pub step: f64,
    pub tuning: bool,
    target: f64,
    bounds: (f64, f64),
    batch_accepted: u64,
    batch_proposed: u64,
    batch_updates: u64,
}

impl ScaleTuning {
    pub fn new(step: f64, target: f64, bounds: (f64, f64), tuning: bool) -> Self {
        Self {
            step,
            tuning,
            target,
            bounds,
            batch_accepted: 0,
            batch_proposed: 0,
            batch_updates: 0,
        }
    }

    /// Intercept walk: standard deviation tuned toward 25% acceptance.
    pub fn alpha(step: f64, tuning: bool) -> Self {
        Self::new(step, ALPHA_TARGET_ACCEPTANCE, (1e-4, 10.0), tuning)
    }

    /// Position moves: the factor k tuned toward 30% acceptance.
    pub fn position(step: f64, tuning: bool) -> Self {
        Self::new(step, POSITION_TARGET_ACCEPTANCE, (1e-6, 100.0), tuning)
    }

    fn observe(&mut self, accepted: u64, proposed: u64) {
        if !self.tuning {
            return;
        }
        self.batch_accepted += accepted;
        self.batch_proposed += proposed;
        self.batch_updates += 1;
        if self.batch_updates == TUNE_BATCH {
            let rate = self.batch_accepted as f64 / self.batch_proposed.max(1) as f64;
            self.step = (self.step * (2.0 * (rate - self.target)).exp()).clamp(self.bounds.0, self.bounds.1);
            self.batch_accepted = 0;
            self.batch_proposed = 0;
            self.batch_updates = 0;
        }
    }
}

/// Step 1: component means from their Gaussian full conditionals.
pub fn update_component_means(state: &mut LatentState, hp: &HyperParams, rng: &mut RngHandle) {
    let (g_total, p) = (state.components(), state.p());
    let mut sums = DMatrix::<f64>::zeros(g_total, p);
    let mut counts = vec![0.0f64; g_total];
    for (i, &c) in state.labels.iter().enumerate() {
        counts[c] += 1.0;
        for l in 0..p {
            sums[(c, l)] += state.z[(i, l)];
        }
    }
    let inv_xi = hp.xi.recip();
    for g in 0..g_total {
        let m = counts[g] + inv_xi;
        for l in 0..p {
            let sd = (state.omega[l] * m).recip().sqrt();
            state.mu[(g, l)] = sums[(g, l)] / m + sd * standard_normal(rng);
        }
    }
}

/// Step 2: mixing weights from Dir(counts + ν).
pub fn update_weights(state: &mut LatentState, hp: &HyperParams, rng: &mut RngHandle) -> Result<()> {
    let conc: Vec<f64> = state.counts().iter().map(|&c| c as f64 + hp.nu).collect();
    state.tau = sample_dirichlet(&conc, rng)?;
    Ok(())
}

/// Log responsibilities of each component for node `i`, up to a constant.
pub fn label_log_weights(state: &LatentState, i: usize, out: &mut Vec<f64>) {
    out.clear();
    for g in 0..state.components() {
        let mut q = 0.0;
        for l in 0..state.p() {
            let d = state.z[(i, l)] - state.mu[(g, l)];
            q += state.omega[l] * d * d;
        }
        out.push(state.tau[g].ln() - 0.5 * q);
    }
}

/// Step 3: labels from their categorical full conditionals.
pub fn update_labels(state: &mut LatentState, rng: &mut RngHandle) {
    let mut logw = Vec::with_capacity(state.components());
    let mut w = Vec::with_capacity(state.components());
    for i in 0..state.n() {
        label_log_weights(state, i, &mut logw);
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        w.clear();
        w.extend(logw.iter().map(|v| (v - max).exp()));
        state.labels[i] = match sample_categorical(&w, rng) {
            Ok(c) => c,
            Err(_) => {
                warn!("label weights for node {} underflowed; using the argmax", i + 1);
                logw.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(g, _)| g)
                    .unwrap_or(0)
            }
        };
    }
}

/// Change in the log-likelihood when node `i` moves from `current` to
/// `proposed`, summed over its incident dyads only.
pub fn node_loglik_delta(
    y: &AdjacencyMatrix,
    z: &DMatrix<f64>,
    alpha: f64,
    i: usize,
    current: &[f64],
    proposed: &[f64],
) -> f64 {
    let (n, p) = (z.nrows(), z.ncols());
    let row = y.row(i);
    let mut acc = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        let (mut dc, mut dp) = (0.0, 0.0);
        for l in 0..p {
            let zj = z[(j, l)];
            let a = zj - current[l];
            let b = zj - proposed[l];
            dc += a * a;
            dp += b * b;
        }
        let ties = (row[j] + y.get(j, i)) as f64;
        let (ec, ep) = (alpha - dc, alpha - dp);
        acc += (ep - ec) * ties - 2.0 * (log1p_exp(ep) - log1p_exp(ec));
    }
    acc
}

/// Metropolis move for the position of node `i` with proposal covariance
/// kΩ⁻¹. Returns whether the proposal was accepted.
pub fn move_node(
    state: &mut LatentState,
    y: &AdjacencyMatrix,
    k: f64,
    i: usize,
    rng: &mut RngHandle,
    scratch: &mut [Vec<f64>; 2],
) -> bool {
    let p = state.p();
    let c = state.labels[i];
    let [current, proposed] = scratch;
    current.resize(p, 0.0);
    proposed.resize(p, 0.0);
    let mut prior = 0.0;
    for l in 0..p {
        current[l] = state.z[(i, l)];
        proposed[l] = current[l] + (k / state.omega[l]).sqrt() * standard_normal(rng);
        let m = state.mu[(c, l)];
        prior -= 0.5 * state.omega[l] * ((proposed[l] - m).powi(2) - (current[l] - m).powi(2));
    }
    let log_ratio = node_loglik_delta(y, &state.z, state.alpha, i, current, proposed) + prior;
    let accept = log_ratio.is_finite() && (log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio);
    if accept {
        for l in 0..p {
            state.z[(i, l)] = proposed[l];
        }
    }
    accept
}

/// Step 4: one Metropolis move per node, in a random order.
pub fn update_positions(
    state: &mut LatentState,
    y: &AdjacencyMatrix,
    k: f64,
    rng: &mut RngHandle,
    counter: &mut AcceptanceCounter,
) {
    let mut order: Vec<usize> = (0..state.n()).collect();
    order.shuffle(rng);
    let mut scratch = [Vec::new(), Vec::new()];
    for &i in &order {
        let accepted = move_node(state, y, k, i, rng, &mut scratch);
        counter.record(accepted);
    }
}

fn alpha_log_target(y: &AdjacencyMatrix, d2: &[f64], alpha: f64, hp: &HyperParams) -> f64 {
    log_likelihood_from_dists(y, d2, alpha) - 0.5 * (alpha - hp.mu_alpha).powi(2) / hp.var_alpha
}

/// Step 5: random-walk Metropolis move for α. Returns the log-likelihood at
/// the retained value.
pub fn update_alpha(
    state: &mut LatentState,
    y: &AdjacencyMatrix,
    hp: &HyperParams,
    tuning: &mut ScaleTuning,
    rng: &mut RngHandle,
    counter: &mut AcceptanceCounter,
) -> f64 {
    let d2 = pairwise_sq_dists(&state.z);
    let current = alpha_log_target(y, &d2, state.alpha, hp);
    let proposal = state.alpha + tuning.step * standard_normal(rng);
    let candidate = alpha_log_target(y, &d2, proposal, hp);
    let log_ratio = candidate - current;
    let accept = log_ratio.is_finite() && (log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio);
    if accept {
        state.alpha = proposal;
    }
    counter.record(accept);
    tuning.observe(accept as u64, 1);
    log_likelihood_from_dists(y, &d2, state.alpha)
}

/// Per-coordinate sums Σi (ziℓ − μ_{ci ℓ})² + ξ⁻¹ Σg μgℓ².
pub fn shrinkage_quadratic_forms(state: &LatentState, hp: &HyperParams) -> Vec<f64> {
    let p = state.p();
    let mut s = vec![0.0; p];
    for (i, &c) in state.labels.iter().enumerate() {
        for l in 0..p {
            let d = state.z[(i, l)] - state.mu[(c, l)];
            s[l] += d * d;
        }
    }
    for g in 0..state.components() {
        for l in 0..p {
            s[l] += state.mu[(g, l)].powi(2) / hp.xi;
        }
    }
    s
}

/// Shape and rate of the δ1 full conditional.
pub fn delta1_conditional(state: &LatentState, hp: &HyperParams) -> (f64, f64) {
    let (n, g, p) = (state.n() as f64, state.components() as f64, state.p());
    let forms = shrinkage_quadratic_forms(state, hp);
    let mut partial = 1.0;
    let mut rate = hp.b1;
    for l in 0..p {
        if l > 0 {
            partial *= state.delta[l];
        }
        rate += 0.5 * partial * forms[l];
    }
    ((n + g) * p as f64 / 2.0 + hp.a1, rate)
}

/// Shape and rate of the δh full conditional (0-based index `h` ≥ 1).
pub fn delta_h_conditional(state: &LatentState, h: usize, hp: &HyperParams) -> (f64, f64) {
    let (n, g, p) = (state.n() as f64, state.components() as f64, state.p());
    let forms = shrinkage_quadratic_forms(state, hp);
    delta_h_from_forms(&state.delta, &forms, h, n + g, p, hp)
}

fn delta_h_from_forms(delta: &[f64], forms: &[f64], h: usize, ng: f64, p: usize, hp: &HyperParams) -> (f64, f64) {
    let mut partial: f64 = delta[..h].iter().product();
    let mut rate = hp.b2;
    for l in h..p {
        if l > h {
            partial *= delta[l];
        }
        rate += 0.5 * partial * forms[l];
    }
    (ng * (p - h) as f64 / 2.0 + hp.a2, rate)
}

/// Step 6: δ1 from its gamma full conditional; ω is refreshed.
pub fn update_delta1(state: &mut LatentState, hp: &HyperParams, rng: &mut RngHandle) -> Result<()> {
    let (shape, rate) = delta1_conditional(state, hp);
    state.delta[0] = sample_gamma(shape, rate, rng)?;
    state.refresh_omega();
    Ok(())
}

/// Step 7: δ2, …, δp in ascending order from their truncated gamma full
/// conditionals; ω is refreshed (step 8).
pub fn update_delta_h(state: &mut LatentState, hp: &HyperParams, rng: &mut RngHandle) -> Result<()> {
    let p = state.p();
    let ng = (state.n() + state.components()) as f64;
    let forms = shrinkage_quadratic_forms(state, hp);
    for h in 1..p {
        let (shape, rate) = delta_h_from_forms(&state.delta, &forms, h, ng, p, hp);
        let tg = TruncGammaParams::new(shape, rate, hp.t2)?;
        match tg.sample(rng) {
            Ok(v) => state.delta[h] = v,
            Err(Error::TruncationMassUnderflow { .. }) => {
                warn!("truncated gamma mass underflow for delta[{}]; keeping {}", h + 1, state.delta[h]);
            }
            Err(e) => return Err(e),
        }
    }
    state.refresh_omega();
    Ok(())
}

/// Proposal scales and acceptance counts carried across sweeps.
#[derive(Debug, Clone)]
pub struct SweepControl {
    pub position: ScaleTuning,
    pub alpha: ScaleTuning,
    pub z_counter: AcceptanceCounter,
    pub alpha_counter: AcceptanceCounter,
}

impl SweepControl {
    pub fn new(position: ScaleTuning, alpha: ScaleTuning) -> Self {
        Self {
            position,
            alpha,
            z_counter: AcceptanceCounter::default(),
            alpha_counter: AcceptanceCounter::default(),
        }
    }

    /// Fixed proposal scales, no tuning.
    pub fn fixed(k: f64, alpha_step: f64) -> Self {
        Self::new(ScaleTuning::position(k, false), ScaleTuning::alpha(alpha_step, false))
    }

    fn set_tuning(&mut self, tune_position: bool, tune_alpha: bool) {
        self.position.tuning = tune_position;
        self.alpha.tuning = tune_alpha;
    }
}

/// One full sweep (steps 1 to 8). Returns the log-likelihood of the state
/// after the sweep.
pub fn sweep(
    state: &mut LatentState,
    y: &AdjacencyMatrix,
    hp: &HyperParams,
    control: &mut SweepControl,
    rng: &mut RngHandle,
) -> Result<f64> {
    update_component_means(state, hp, rng);
    update_weights(state, hp, rng)?;
    update_labels(state, rng);
    let before = control.z_counter;
    update_positions(state, y, control.position.step, rng, &mut control.z_counter);
    control.position.observe(
        control.z_counter.accepted - before.accepted,
        control.z_counter.proposed - before.proposed,
    );
    let ll = update_alpha(state, y, hp, &mut control.alpha, rng, &mut control.alpha_counter);
    update_delta1(state, hp, rng)?;
    update_delta_h(state, hp, rng)?;
    Ok(ll)
}

fn state_dump(state: &LatentState, s: u64) -> String {
    format!(
        "iteration {s}: p = {}, alpha = {}, delta = {:?}, tau = {:?}",
        state.p(),
        state.alpha,
        state.delta,
        state.tau
    )
}

/// Initializes and runs one chain.
pub fn run_chain(y: &AdjacencyMatrix, config: &ChainConfig) -> Result<PosteriorTrace> {
    config.validate()?;
    let mut rng = RngHandle::new(config.seed, config.stream);
    let (state, report) = initialize(y, &config.hp, &mut rng)?;
    run_chain_from(y, config, state, report, rng)
}

/// Runs a chain from a given starting state.
pub fn run_chain_from(
    y: &AdjacencyMatrix,
    config: &ChainConfig,
    mut state: LatentState,
    init_report: InitReport,
    mut rng: RngHandle,
) -> Result<PosteriorTrace> {
    config.validate()?;
    let hp = &config.hp;
    let burning = config.burn_in > 0;
    let mut control = SweepControl::new(
        ScaleTuning::position(hp.step, burning && config.tune_step),
        ScaleTuning::alpha(config.alpha_step, burning),
    );
    let mut reference = state.z.clone();
    let mut reference_loglik = log_likelihood_from_dists(y, &pairwise_sq_dists(&state.z), state.alpha);
    let capacity = ((config.iterations - config.burn_in) / config.thin) as usize;
    let mut samples = Vec::with_capacity(capacity);
    let mut adapt_events = Vec::new();

    for s in 1..=config.iterations {
        if s == config.burn_in + 1 {
            control.set_tuning(false, false);
        }
        let mut ll = sweep(&mut state, y, hp, &mut control, &mut rng)?;
        if config.adapt_dimensions && s > config.burn_in {
            let rel = s - config.burn_in;
            if rng.random::<f64>() < adapt_probability(rel, hp.kappa0, hp.kappa1) {
                let decision = decide(&state, hp, s);
                let event = apply(&mut state, &decision, hp, &mut rng)?;
                debug!(
                    "iteration {s}: adaptation {:?} (trigger {:.4}), p {} -> {}",
                    event.action, event.trigger, event.old_p, event.new_p
                );
                if event.action != AdaptAction::None && event.old_p != event.new_p {
                    ll = log_likelihood_from_dists(y, &pairwise_sq_dists(&state.z), state.alpha);
                }
                adapt_events.push(event);
            }
        }
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood is {ll} at {}", state_dump(&state, s))));
        }
        if s <= config.burn_in && ll > reference_loglik {
            reference_loglik = ll;
            reference = state.z.clone();
        }
        if config.is_stored(s) {
            samples.push(Sample {
                iteration: s,
                loglik: ll,
                state: state.clone(),
            });
        }
    }
    Ok(PosteriorTrace {
        samples,
        z_acceptance: control.z_counter,
        alpha_acceptance: control.alpha_counter,
        reference,
        reference_loglik,
        adapt_events,
        init_report,
        alpha_step: control.alpha.step,
        position_step: control.position.step,
    })
}

fn push_float(out: &mut String, v: f64) {
    use std::fmt::Write as _;
    write!(out, "{v:.16e}").expect("writing to a String");
}

fn push_floats<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    out.push('[');
    for (k, v) in vals.enumerate() {
        if k > 0 {
            out.push(',');
        }
        push_float(out, *v);
    }
    out.push(']');
}

/// One JSON line for a stored sample. Labels are written 1-based.
pub fn trace_line(sample: &Sample) -> String {
    let st = &sample.state;
    let mut out = String::with_capacity(64 + 24 * (st.z.len() + st.mu.len()));
    out.push_str(&format!("{{\"iteration\":{},\"p\":{},\"alpha\":", sample.iteration, st.p()));
    push_float(&mut out, st.alpha);
    out.push_str(",\"loglik\":");
    push_float(&mut out, sample.loglik);
    out.push_str(",\"tau\":");
    push_floats(&mut out, st.tau.iter());
    out.push_str(",\"labels\":[");
    let labels: Vec<String> = st.labels.iter().map(|c| (c + 1).to_string()).collect();
    out.push_str(&labels.join(","));
    out.push_str("],\"mu\":[");
    for g in 0..st.components() {
        if g > 0 {
            out.push(',');
        }
        push_floats(&mut out, st.mu.row(g).iter());
    }
    out.push_str("],\"delta\":");
    push_floats(&mut out, st.delta.iter());
    out.push_str(",\"Z\":[");
    let mut first = true;
    for i in 0..st.n() {
        for l in 0..st.p() {
            if !first {
                out.push(',');
            }
            first = false;
            push_float(&mut out, st.z[(i, l)]);
        }
    }
    out.push_str("]}");
    out
}

#[derive(Debug, Deserialize)]
struct TraceRecord {
    iteration: u64,
    p: usize,
    alpha: f64,
    loglik: f64,
    tau: Vec<f64>,
    labels: Vec<usize>,
    mu: Vec<Vec<f64>>,
    delta: Vec<f64>,
    #[serde(rename = "Z")]
    z: Vec<f64>,
}

/// Writes samples as JSON lines, one complete line per write.
pub fn write_trace<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in samples {
        let mut line = trace_line(s);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, samples: &[Sample]) -> Result<()> {
    write_trace(File::create(path)?, samples)
}

fn schema_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::TraceSchema {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a JSON-lines trace back into samples.
pub fn read_trace_file(path: &Path) -> Result<Vec<Sample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 1;
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|e| schema_error(path, lineno, e.to_string()))?;
        let (p, g) = (rec.p, rec.tau.len());
        if p == 0 || rec.delta.len() != p || rec.z.len() % p != 0 {
            return Err(schema_error(path, lineno, "dimension fields disagree"));
        }
        let n = rec.z.len() / p;
        if rec.labels.len() != n || rec.mu.len() != g || rec.mu.iter().any(|r| r.len() != p) {
            return Err(schema_error(path, lineno, "label or mean shapes disagree"));
        }
        if rec.labels.iter().any(|&c| c == 0 || c > g) {
            return Err(schema_error(path, lineno, "label out of range"));
        }
        let mut state = LatentState {
            z: DMatrix::from_row_slice(n, p, &rec.z),
            labels: rec.labels.iter().map(|c| c - 1).collect(),
            tau: rec.tau,
            mu: DMatrix::from_fn(g, p, |r, l| rec.mu[r][l]),
            omega: Vec::new(),
            delta: rec.delta,
            alpha: rec.alpha,
        };
        state.refresh_omega();
        out.push(Sample {
            iteration: rec.iteration,
            loglik: rec.loglik,
            state,
        });
    }
    Ok(out)
}

/// Per-chain entry of a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub stream: u64,
    pub trace_file: String,
    pub samples: usize,
    pub init: InitReport,
    pub z_acceptance: f64,
    pub alpha_acceptance: f64,
    pub alpha_step: f64,
    pub position_step: f64,
    pub reference_loglik: f64,
    /// Best burn-in positions, one row per node.
    pub reference: Vec<Vec<f64>>,
    pub adaptations: Vec<AdaptEvent>,
}

impl ChainRecord {
    pub fn from_trace(chain: usize, stream: u64, trace_file: String, trace: &PosteriorTrace) -> Self {
        Self {
            chain,
            stream,
            trace_file,
            samples: trace.samples.len(),
            init: trace.init_report.clone(),
            z_acceptance: trace.z_acceptance.rate(),
            alpha_acceptance: trace.alpha_acceptance.rate(),
            alpha_step: trace.alpha_step,
            position_step: trace.position_step,
            reference_loglik: trace.reference_loglik,
            reference: trace.reference.row_iter().map(|r| r.iter().copied().collect()).collect(),
            adaptations: trace.adapt_events.clone(),
        }
    }

    pub fn reference_matrix(&self) -> DMatrix<f64> {
        let n = self.reference.len();
        let p = self.reference.first().map_or(0, |r| r.len());
        DMatrix::from_fn(n, p, |i, l| self.reference[i][l])
    }
}

/// Record of a fit: configuration, seed and per-chain diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub network: String,
    pub config: ChainConfig,
    pub chains: Vec<ChainRecord>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
