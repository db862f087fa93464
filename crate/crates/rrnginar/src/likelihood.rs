//! Exact conditional pmfs, conditional maximum likelihood fitting given a
//! state sequence, one-step prediction, and RMS scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    order_sequence, CountSeries, EnvSequence, ModelParams, OrderRule, OrderSequence, Phi, Variant,
};
use crate::optim::nelder_mead;
use crate::rng::{self, derive_seed, Stream};
use crate::sampling::innovation_params;
use rand::Rng;

// ---------------------------------------------------------------------------
// Probability mass functions
// ---------------------------------------------------------------------------

const LN_FACTORIAL_TABLE: usize = 16_384;

fn ln_factorial(n: u64) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_TABLE);
        t.push(0.0);
        let mut sum = 0.0;
        let mut comp = 0.0; // Kahan compensation
        for k in 1..LN_FACTORIAL_TABLE as u64 {
            let term = (k as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            t.push(sum);
        }
        t
    });
    if (n as usize) < table.len() {
        table[n as usize]
    } else {
        // Stirling series, plenty accurate this far out.
        let z = n as f64 + 1.0;
        (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * z)
            - 1.0 / (360.0 * z.powi(3))
    }
}

fn geom_pmf_unchecked(mean: f64, t: u64) -> f64 {
    (t as f64 * mean.ln() - (t as f64 + 1.0) * mean.ln_1p()).exp()
}

/// Geometric pmf on `{0, 1, ...}`: `mean^t / (1 + mean)^(t + 1)`.
pub fn geom_pmf(mean: f64, t: u64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!("geometric mean must be positive, got {mean}")));
    }
    Ok(geom_pmf_unchecked(mean, t))
}

fn thin_pmf_unchecked(x_lag: u64, alpha: f64, t: u64) -> f64 {
    if x_lag == 0 {
        return if t == 0 { 1.0 } else { 0.0 };
    }
    let ln_choose = ln_factorial(t + x_lag - 1) - ln_factorial(t) - ln_factorial(x_lag - 1);
    (ln_choose + t as f64 * alpha.ln() - (t + x_lag) as f64 * alpha.ln_1p()).exp()
}

/// pmf of `alpha * x_lag` (negative binomial; a point mass at zero when
/// `x_lag = 0`), computed in log space.
pub fn thin_pmf(x_lag: u64, alpha: f64, t: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha={alpha} outside (0, 1)")));
    }
    Ok(thin_pmf_unchecked(x_lag, alpha, t))
}

fn cond_pmf_inner(
    n: usize,
    t: u64,
    x: &CountSeries,
    z: &EnvSequence,
    pn: &OrderSequence,
    params: &ModelParams,
) -> Result<f64> {
    let order = pn.pn[n - 1];
    if n < 2 || order == 0 {
        return Err(Error::Domain(format!("no conditional law at index {n}")));
    }
    let state = z.z[n - 1];
    let alpha = params.a[state - 1];
    let mu = params.m[state - 1];
    let row = order.min(params.p[state - 1]);
    let mut total = 0.0;
    for lag in 1..=row {
        let weight = params.lag_prob(state, row, lag);
        if weight == 0.0 {
            continue;
        }
        let lag_state = z.z[n - 1 - lag];
        let mix = innovation_params(mu, params.m[lag_state - 1], alpha).map_err(|e| match e {
            Error::Infeasible { alpha, bound, .. } => Error::Infeasible {
                lag_state,
                cur_state: state,
                alpha,
                bound,
            },
            other => other,
        })?;
        let x_lag = x.x[n - 1 - lag];
        // Finite convolution: thinning and innovation split t exactly.
        let mut inner = 0.0;
        for k in 0..=t {
            inner += thin_pmf_unchecked(x_lag, alpha, k) * mix.pmf(t - k);
        }
        total += weight * inner;
    }
    Ok(total)
}

/// Conditional pmf `P(X_n = t | history)` of the count recursion, mixing
/// over the possible lags at the realized order `P_n`.
///
/// `n` is 1-based and must have `P_n >= 1` (that is, `n >= 2`).
pub fn cond_pmf(
    n: usize,
    t: u64,
    x: &CountSeries,
    z: &EnvSequence,
    params: &ModelParams,
    rule: OrderRule,
) -> Result<f64> {
    check_series(x, z, params)?;
    if n < 2 || n > x.len() {
        return Err(Error::IndexOutOfRange { index: n, len: x.len() });
    }
    let pn = order_sequence(z, params, rule)?;
    cond_pmf_inner(n, t, x, z, &pn, params)
}

fn check_series(x: &CountSeries, z: &EnvSequence, params: &ModelParams) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: z.len() });
    }
    let violations = params.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations.join("; ")));
    }
    z.check_states(params.r)
}

fn loglik_with_orders(
    x: &CountSeries,
    z: &EnvSequence,
    pn: &OrderSequence,
    params: &ModelParams,
) -> Result<f64> {
    let mut total = 0.0;
    for n in 1..=x.len() {
        if pn.pn[n - 1] == 0 {
            continue;
        }
        let p = cond_pmf_inner(n, x.x[n - 1], x, z, pn, params)?;
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::ZeroProbability { index: n, value: x.x[n - 1] });
        }
        total += p.ln();
    }
    Ok(total)
}

/// Conditional log likelihood given the state sequence: the sum of
/// `ln P(X_n = x_n | history)` over every index with `P_n >= 1`.
pub fn loglik(x: &CountSeries, z: &EnvSequence, params: &ModelParams, rule: OrderRule) -> Result<f64> {
    check_series(x, z, params)?;
    let pn = order_sequence(z, params, rule)?;
    loglik_with_orders(x, z, &pn, params)
}

// ---------------------------------------------------------------------------
// Conditional maximum likelihood
// ---------------------------------------------------------------------------

/// CML estimates with diagnostics. Serializes to the model-parameter schema
/// plus `loglik`, `rms` and `converged`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: ModelParams,
    pub loglik: f64,
    /// In-sample prediction RMS; filled by evaluation, absent right after a fit.
    pub rms: Option<f64>,
    /// One-step-ahead forecast RMS (current state propagated, not peeked).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_rms: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

struct ParamMap {
    r: usize,
    variant: Variant,
    p: Vec<usize>,
    /// Lag states that can pair with each current state in the likelihood.
    lag_states: Vec<Vec<usize>>,
    /// Orders (phi rows) actually exercised per state.
    used_rows: Vec<Vec<usize>>,
    mu_free: Vec<bool>,
    alpha_free: Vec<bool>,
    mu_init: Vec<f64>,
    dim: usize,
}

impl ParamMap {
    fn build(
        x: &CountSeries,
        z: &EnvSequence,
        variant: Variant,
        p: &[usize],
        pn: &OrderSequence,
    ) -> Self {
        let r = p.len();
        let mut lag_state_sets = vec![std::collections::BTreeSet::new(); r];
        let mut used_row_sets = vec![std::collections::BTreeSet::new(); r];
        let mut alpha_free = vec![false; r];
        for n in 2..=z.len() {
            let order = pn.pn[n - 1];
            if order == 0 {
                continue;
            }
            let j = z.z[n - 1];
            let row = order.min(p[j - 1]);
            alpha_free[j - 1] = true;
            used_row_sets[j - 1].insert(row);
            for lag in 1..=row {
                lag_state_sets[j - 1].insert(z.z[n - 1 - lag]);
            }
        }
        let mut mu_free = alpha_free.clone();
        for set in &lag_state_sets {
            for &s in set {
                mu_free[s - 1] = true;
            }
        }
        // Moment initialization: within-state sample means.
        let mut sums = vec![0.0; r];
        let mut counts = vec![0usize; r];
        for (&xi, &zi) in x.x.iter().zip(&z.z) {
            sums[zi - 1] += xi as f64;
            counts[zi - 1] += 1;
        }
        let global_mean =
            (x.x.iter().sum::<u64>() as f64 / x.len().max(1) as f64).max(0.05);
        let mu_init: Vec<f64> = (0..r)
            .map(|j| {
                if counts[j] > 0 {
                    (sums[j] / counts[j] as f64).max(0.05)
                } else {
                    global_mean
                }
            })
            .collect();

        let lag_states: Vec<Vec<usize>> =
            lag_state_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let used_rows: Vec<Vec<usize>> =
            used_row_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut dim = 0;
        for j in 0..r {
            if mu_free[j] {
                dim += 1;
            }
            if alpha_free[j] {
                dim += 1;
            }
            for &row in &used_rows[j] {
                dim += row - 1;
            }
        }
        Self {
            r,
            variant,
            p: p.to_vec(),
            lag_states,
            used_rows,
            mu_free,
            alpha_free,
            mu_init,
            dim,
        }
    }

    fn initial(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dim);
        for j in 0..self.r {
            if self.mu_free[j] {
                theta.push(self.mu_init[j].ln());
            }
        }
        for j in 0..self.r {
            if self.alpha_free[j] {
                theta.push(0.0); // sigmoid(0) = 0.5 => alpha starts at half its bound
            }
        }
        for j in 0..self.r {
            for &row in &self.used_rows[j] {
                theta.extend(std::iter::repeat(0.0).take(row - 1)); // uniform rows
            }
        }
        theta
    }

    fn unpack(&self, theta: &[f64]) -> ModelParams {
        let mut idx = 0;
        let mut m = self.mu_init.clone();
        for j in 0..self.r {
            if self.mu_free[j] {
                m[j] = theta[idx].exp();
                idx += 1;
            }
        }
        let mut a = vec![0.0; self.r];
        for j in 0..self.r {
            let bound = self.lag_states[j]
                .iter()
                .map(|&li| m[j] / (1.0 + m[li - 1]))
                .fold(1.0f64, f64::min);
            if self.alpha_free[j] {
                a[j] = sigmoid(theta[idx]) * bound;
                idx += 1;
            } else {
                a[j] = 0.5 * bound;
            }
        }
        let mut phi = Vec::with_capacity(self.r);
        for j in 0..self.r {
            let p_j = self.p[j];
            match self.variant {
                Variant::Max => {
                    let mut rows: Vec<Vec<f64>> =
                        (1..=p_j).map(|q| vec![1.0 / q as f64; q]).collect();
                    rows[0] = vec![1.0];
                    for &row in &self.used_rows[j] {
                        if row >= 2 {
                            rows[row - 1] = softmax_row(&theta[idx..idx + row - 1]);
                            idx += row - 1;
                        }
                    }
                    phi.push(Phi::Matrix(rows));
                }
                Variant::One => {
                    let mut vector = vec![1.0 / p_j as f64; p_j];
                    for &row in &self.used_rows[j] {
                        if row >= 2 {
                            vector = softmax_row(&theta[idx..idx + row - 1]);
                            idx += row - 1;
                        }
                    }
                    phi.push(Phi::Vector(vector));
                }
            }
        }
        debug_assert_eq!(idx, self.dim);
        ModelParams {
            variant: self.variant,
            r: self.r,
            m,
            a,
            p: self.p.clone(),
            phi,
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Simplex coordinates from free logits, with the first entry pinned at
/// logit zero.
fn softmax_row(free: &[f64]) -> Vec<f64> {
    let mut exps = Vec::with_capacity(free.len() + 1);
    let max = free.iter().cloned().fold(0.0f64, f64::max);
    exps.push((-max).exp());
    for &l in free {
        exps.push((l - max).exp());
    }
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

const CML_RESTARTS: usize = 5;
const CML_MAX_EVAL: usize = 5_000;
const CML_FTOL: f64 = 1e-8;

/// Fits `(M, A, phi)` by conditional maximum likelihood given the state
/// sequence. Means move on a log scale, thinning parameters through a
/// logistic squashed by the feasibility bound implied by the current means,
/// and lag rows on the simplex through softmax, so every candidate is
/// feasible by construction. Five seeded Nelder–Mead restarts run from
/// perturbed moment initializations; the best ending wins.
pub fn cml_fit(
    x: &CountSeries,
    z: &EnvSequence,
    variant: Variant,
    p: &[usize],
    rule: OrderRule,
    seed: u64,
) -> Result<FitResult> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: z.len() });
    }
    if x.is_empty() {
        return Err(Error::Empty("series"));
    }
    let r = p.len();
    z.check_states(r)?;
    if p.iter().any(|&pj| pj == 0) {
        return Err(Error::Domain("max orders must be >= 1".into()));
    }
    // Orders depend only on (z, variant, p), so compute them once up front.
    let probe = ParamMap {
        r,
        variant,
        p: p.to_vec(),
        lag_states: vec![Vec::new(); r],
        used_rows: vec![Vec::new(); r],
        mu_free: vec![false; r],
        alpha_free: vec![false; r],
        mu_init: vec![1.0; r],
        dim: 0,
    };
    let pn = order_sequence(z, &probe.unpack(&[]), rule)?;
    let map = ParamMap::build(x, z, variant, p, &pn);

    let mut warnings = Vec::new();
    for j in 0..r {
        if !map.alpha_free[j] {
            warnings.push(format!(
                "state {} never appears with an autoregressive term; its parameters stay at initialization",
                j + 1
            ));
        }
    }

    let objective = |theta: &[f64]| -> f64 {
        let params = map.unpack(theta);
        match loglik_with_orders(x, z, &pn, &params) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let theta0 = map.initial();
    let runs: Vec<(usize, crate::optim::MinimizeResult)> = (0..CML_RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let start = if restart == 0 {
                theta0.clone()
            } else {
                let mut rng = rng::stream(derive_seed(seed, &[restart as u64]), Stream::Optimizer);
                theta0
                    .iter()
                    .map(|&v| v + (rng.random::<f64>() - 0.5))
                    .collect()
            };
            (restart, nelder_mead(&objective, &start, 0.25, CML_MAX_EVAL, CML_FTOL))
        })
        .collect();

    let best = runs
        .iter()
        .min_by(|(ia, a), (ib, b)| {
            a.f.partial_cmp(&b.f).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        })
        .map(|(_, res)| res)
        .unwrap();

    if !best.f.is_finite() {
        return Err(Error::Domain("likelihood not finite at any candidate".into()));
    }
    let params = map.unpack(&best.x);
    let converged = best.converged;
    if !converged {
        warnings.push("optimizer hit its evaluation budget before converging".into());
    }
    Ok(FitResult {
        loglik: -best.f,
        params,
        rms: None,
        forecast_rms: None,
        converged,
        iterations: best.evaluations,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Prediction and scoring
// ---------------------------------------------------------------------------

/// One-step conditional-mean predictions. Indices with `P_n = 0` (the first
/// element) predict the state's marginal mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredSeries {
    pub xhat: Vec<f64>,
}

/// Conditional expectation of each element given its history:
/// `sum_i phi_i * (alpha x_{n-i} + mu_cur - alpha mu_lag)`; the innovation
/// mean `mu_cur - alpha mu_lag` is the mean of the pair's mixture law.
pub fn predict(
    x: &CountSeries,
    z: &EnvSequence,
    params: &ModelParams,
    rule: OrderRule,
) -> Result<PredSeries> {
    check_series(x, z, params)?;
    let pn = order_sequence(z, params, rule)?;
    let mut xhat = Vec::with_capacity(x.len());
    for n in 1..=x.len() {
        let state = z.z[n - 1];
        let mu = params.m[state - 1];
        let order = pn.pn[n - 1];
        if order == 0 {
            xhat.push(mu);
            continue;
        }
        let alpha = params.a[state - 1];
        let row = order.min(params.p[state - 1]);
        let mut acc = 0.0;
        for lag in 1..=row {
            let weight = params.lag_prob(state, row, lag);
            let mu_lag = params.m[z.z[n - 1 - lag] - 1];
            acc += weight * (alpha * x.x[n - 1 - lag] as f64 + mu - alpha * mu_lag);
        }
        xhat.push(acc);
    }
    Ok(PredSeries { xhat })
}

/// One-step-ahead forecasts that do not peek at the current state.
///
/// [`predict`] conditions on `z_n`, which is fine for in-sample fitted
/// values but rewards state estimators that encode `x_n` in `z_n` (plain
/// value clustering does exactly that). For comparing state-estimation
/// methods by forecast quality the current state must itself be forecast;
/// under the diagonal-dominant chains this model targets, the most likely
/// next state is the previous one, so the forecast substitutes
/// `z*_n = z_{n-1}` for the unknown `z_n` (the run length, a function of
/// history alone, caps the order as usual). The first element, with no
/// history, falls back to its state's marginal mean.
pub fn forecast(
    x: &CountSeries,
    z: &EnvSequence,
    params: &ModelParams,
    rule: OrderRule,
) -> Result<PredSeries> {
    check_series(x, z, params)?;
    let mut xhat = Vec::with_capacity(x.len());
    if !x.is_empty() {
        xhat.push(params.m[z.z[0] - 1]);
    }
    for n in 2..=x.len() {
        let star = z.z[n - 2];
        let mu = params.m[star - 1];
        let alpha = params.a[star - 1];
        let p_star = params.p[star - 1];
        let run = crate::model::consecutive_run(z, n)?;
        let order = match params.variant {
            Variant::Max => match rule {
                OrderRule::Min => run.min(p_star),
                OrderRule::LiteralMax => run.max(p_star).min(n - 1),
            },
            Variant::One => {
                if run < p_star {
                    1
                } else {
                    p_star
                }
            }
        };
        let row = order.min(p_star);
        let mut acc = 0.0;
        for lag in 1..=row {
            let weight = params.lag_prob(star, row, lag);
            let mu_lag = params.m[z.z[n - 1 - lag] - 1];
            acc += weight * (alpha * x.x[n - 1 - lag] as f64 + mu - alpha * mu_lag);
        }
        xhat.push(acc);
    }
    Ok(PredSeries { xhat })
}

/// Root mean square prediction error over the evaluated indices.
pub fn rms(x: &CountSeries, pred: &PredSeries) -> Result<f64> {
    if x.len() != pred.xhat.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: pred.xhat.len() });
    }
    if x.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let sum_sq: f64 = x
        .x
        .iter()
        .zip(&pred.xhat)
        .map(|(&xi, &hi)| {
            let d = xi as f64 - hi;
            d * d
        })
        .sum();
    Ok((sum_sq / x.len() as f64).sqrt())
}
