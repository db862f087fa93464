//! Pre-estimate sequences for environment-state clustering.
//!
//! From a raw count series three per-time-point proxies are built: the mean
//! proxy (the value itself), an order proxy (the best PACF lag over a moving
//! window) and a thinning proxy (positive deviations from the local trimmed
//! mean, normalized). Each proxy is smoothed by a symmetric trimmed mean `T`,
//! scaled by `S` to mean one, and weighted by an impact constant, producing
//! the three-dimensional feature rows that the clustering step consumes.
//!
//! Three spots in the published description of these formulas are ambiguous;
//! each is resolved here as documented on the operation, with the literal
//! printed reading available behind [`LiteralSwitches`]:
//!
//! * `T` weights neighboring values `a_j` (the printed `a_i` would make `T`
//!   the identity for normalized weights);
//! * the order proxy is the arg-max PACF lag (the printed max would yield a
//!   correlation value, not an order);
//! * the denominator of the thinning proxy averages the most recent
//!   deviations (the printed form freezes the average at the series head).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountSeries;

/// Symmetric trimming weights `(c_0, ..., c_k)`, `k <= 4`: nonincreasing,
/// positive, with `c_0 + 2 * (c_1 + ... + c_k) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector {
    c: Vec<f64>,
}

impl WeightVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if c.len() > 5 {
            return Err(Error::Domain(format!(
                "weight vector has k={} neighbors, at most 4 supported",
                c.len() - 1
            )));
        }
        if c.iter().any(|&w| w <= 0.0) {
            return Err(Error::Domain("weight vector entries must be positive".into()));
        }
        if c.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Domain("weight vector entries must be nonincreasing".into()));
        }
        let total = c[0] + 2.0 * c[1..].iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "weight vector mass c_0 + 2*sum(c_1..) = {total}, expected 1"
            )));
        }
        Ok(Self { c })
    }

    /// Identity weights: `c = (1)`.
    pub fn identity() -> Self {
        Self { c: vec![1.0] }
    }

    /// Number of neighbors on each side.
    pub fn k(&self) -> usize {
        self.c.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.c
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(c: Vec<f64>) -> Result<Self> {
        Self::new(c)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.c
    }
}

/// Escape hatches reproducing the literal printed formulas. All default to
/// off; the resolved readings are what the rest of the crate is tested
/// against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiteralSwitches {
    /// `T` multiplies the center value by the whole weight mass (identity
    /// for normalized weights) instead of averaging neighbors.
    pub trim_center: bool,
    /// The order proxy takes the maximal PACF value instead of the arg-max lag.
    pub pacf_value: bool,
    /// The thinning-proxy denominator averages the first `s` deviations
    /// instead of the `s` most recent ones.
    pub alpha_head_mean: bool,
}

/// Method parameters: PACF window half-width, trimming weights per
/// coordinate, and the per-coordinate impact constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenesConfig {
    pub d_p: usize,
    pub c_m: WeightVector,
    pub c_a: WeightVector,
    pub c_p: WeightVector,
    #[serde(rename = "C_m")]
    pub impact_m: f64,
    #[serde(rename = "C_a")]
    pub impact_a: f64,
    #[serde(rename = "C_p")]
    pub impact_p: f64,
    #[serde(default)]
    pub literal: LiteralSwitches,
}

impl RenesConfig {
    pub fn validate(&self, p_max: usize) -> Result<()> {
        if self.d_p == 0 {
            return Err(Error::Domain("d_p must be >= 1".into()));
        }
        if self.d_p < p_max {
            return Err(Error::Domain(format!(
                "d_p={} smaller than the maximal order {p_max} considered",
                self.d_p
            )));
        }
        for (name, c) in [("C_m", self.impact_m), ("C_a", self.impact_a), ("C_p", self.impact_p)] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Domain(format!("{name} must be a positive real, got {c}")));
            }
        }
        Ok(())
    }

    pub fn with_impacts(&self, m: f64, a: f64, p: f64) -> Self {
        Self {
            impact_m: m,
            impact_a: a,
            impact_p: p,
            ..self.clone()
        }
    }
}

/// Trimmed/scaled pre-estimate sequences and the clustering features.
#[derive(Debug, Clone, PartialEq)]
pub struct PreEstimates {
    /// `T(mu~, c_m)`
    pub mu_t: Vec<f64>,
    /// `T(alpha~, c_a)`
    pub alpha_t: Vec<f64>,
    /// `T(P~, c_p)`
    pub p_t: Vec<f64>,
    /// Rows `(C_m * S_m, C_a * S_a, C_p * S_p)`.
    pub features: Vec<[f64; 3]>,
}

/// Weighted local mean at 1-based index `i`: boundary indices pass through,
/// interior indices average `c_|j-i| * seq_j` over the window `i-k ..= i+k`.
pub fn trimmed(seq: &[f64], c: &WeightVector, i: usize) -> Result<f64> {
    trimmed_impl(seq, c, i, false)
}

fn trimmed_impl(seq: &[f64], c: &WeightVector, i: usize, literal_center: bool) -> Result<f64> {
    let n = seq.len();
    if i < 1 || i > n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let k = c.k();
    if i <= k || i > n - k {
        return Ok(seq[i - 1]);
    }
    if literal_center {
        let mass: f64 = c.weights()[0] + 2.0 * c.weights()[1..].iter().sum::<f64>();
        return Ok(mass * seq[i - 1]);
    }
    let w = c.weights();
    let mut acc = w[0] * seq[i - 1];
    for d in 1..=k {
        acc += w[d] * (seq[i - 1 - d] + seq[i - 1 + d]);
    }
    Ok(acc)
}

pub fn trimmed_seq(seq: &[f64], c: &WeightVector) -> Result<Vec<f64>> {
    trimmed_seq_impl(seq, c, false)
}

fn trimmed_seq_impl(seq: &[f64], c: &WeightVector, literal_center: bool) -> Result<Vec<f64>> {
    (1..=seq.len())
        .map(|i| trimmed_impl(seq, c, i, literal_center))
        .collect()
}

/// Scales the trimmed sequence to mean one: `S_n = T_n * N / sum_i T_i`.
///
/// Errors when the trimmed sequence carries no mass, which signals that the
/// series is uninformative for this coordinate.
pub fn scaled(seq: &[f64], c: &WeightVector) -> Result<Vec<f64>> {
    let t = trimmed_seq(seq, c)?;
    scale_to_mean_one(&t, "sequence")
}

fn scale_to_mean_one(t: &[f64], what: &'static str) -> Result<Vec<f64>> {
    let total: f64 = t.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Uninformative(what));
    }
    let n = t.len() as f64;
    Ok(t.iter().map(|&v| v * n / total).collect())
}

/// Mean proxy: the observations themselves, as reals.
pub fn mu_pre(x: &CountSeries) -> Vec<f64> {
    x.as_f64()
}

/// Sample partial autocorrelations at lags `1..=max_lag` via
/// Durbin–Levinson on biased (divisor `N`) autocovariances.
pub fn pacf(window: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = window.len();
    if max_lag == 0 {
        return Err(Error::Domain("max_lag must be >= 1".into()));
    }
    if n < max_lag + 1 {
        return Err(Error::SeriesTooShort { needed: max_lag + 1, got: n });
    }
    let mean = window.iter().sum::<f64>() / n as f64;
    let mut gamma = vec![0.0; max_lag + 1];
    for (h, g) in gamma.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in 0..n - h {
            acc += (window[t] - mean) * (window[t + h] - mean);
        }
        *g = acc / n as f64;
    }
    if !(gamma[0] > 0.0) {
        return Err(Error::Domain("zero-variance window".into()));
    }
    let rho: Vec<f64> = gamma.iter().map(|&g| g / gamma[0]).collect();

    let mut out = Vec::with_capacity(max_lag);
    let mut phi_prev: Vec<f64> = vec![rho[1]];
    out.push(rho[1]);
    for k in 2..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi_prev[j - 1] * rho[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi_prev[j - 1] * rho[j]).sum::<f64>();
        // The biased autocovariance sequence is positive definite, so den > 0
        // in exact arithmetic; guard against float slop only.
        let phi_kk = if den.abs() < 1e-300 { 0.0 } else { num / den };
        let mut phi_next = vec![0.0; k];
        for j in 1..k {
            phi_next[j - 1] = phi_prev[j - 1] - phi_kk * phi_prev[k - j - 1];
        }
        phi_next[k - 1] = phi_kk;
        out.push(phi_kk);
        phi_prev = phi_next;
    }
    Ok(out)
}

/// Order proxy: for each index, the PACF lag in `1..=p_max` with the largest
/// partial autocorrelation over the prescribed window (head indices share
/// the first window, tail indices the last). Zero-variance windows map to 1.
pub fn p_pre(x: &CountSeries, d_p: usize, p_max: usize) -> Result<Vec<f64>> {
    p_pre_impl(x, d_p, p_max, false)
}

fn p_pre_impl(x: &CountSeries, d_p: usize, p_max: usize, literal_value: bool) -> Result<Vec<f64>> {
    let n = x.len();
    let width = 2 * d_p + 1;
    if n < width {
        return Err(Error::SeriesTooShort { needed: width, got: n });
    }
    if p_max == 0 {
        return Err(Error::Domain("p_max must be >= 1".into()));
    }
    let xs = x.as_f64();
    let summarize = |window: &[f64]| -> Result<f64> {
        match pacf(window, p_max) {
            Ok(vals) => {
                if literal_value {
                    Ok(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                } else {
                    let mut best = 0usize;
                    for (idx, &v) in vals.iter().enumerate() {
                        if v > vals[best] {
                            best = idx;
                        }
                    }
                    Ok((best + 1) as f64)
                }
            }
            Err(Error::Domain(_)) => Ok(1.0), // zero-variance sentinel
            Err(e) => Err(e),
        }
    };

    let head = summarize(&xs[..width])?;
    let tail = summarize(&xs[n - width..])?;
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        if i <= d_p {
            out.push(head);
        } else if i <= n - d_p {
            out.push(summarize(&xs[i - 1 - d_p..i + d_p])?);
        } else {
            out.push(tail);
        }
    }
    Ok(out)
}

/// Thinning proxy. `A_n = (x_n - T(mu~)_n)_+` measures the excess over the
/// local level; `B_n` averages the `s = min(n-1, round(P~_n))` most recent
/// deviations. The raw ratio `A_n / B_n` mimics `E(alpha * X | X) = alpha X`;
/// indices with no usable denominator fall back to the largest valid ratio,
/// and the whole sequence is normalized by its maximum.
pub fn alpha_pre(x: &CountSeries, mu_trimmed: &[f64], p_t: &[f64]) -> Result<Vec<f64>> {
    alpha_pre_impl(x, mu_trimmed, p_t, false)
}

fn alpha_pre_impl(
    x: &CountSeries,
    mu_trimmed: &[f64],
    p_t: &[f64],
    literal_head: bool,
) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    if mu_trimmed.len() != n {
        return Err(Error::LengthMismatch { left: mu_trimmed.len(), right: n });
    }
    if p_t.len() != n {
        return Err(Error::LengthMismatch { left: p_t.len(), right: n });
    }
    let a: Vec<f64> = (0..n)
        .map(|i| (x.x[i] as f64 - mu_trimmed[i]).max(0.0))
        .collect();
    // b[i] is B_{i+1}; undefined (None) at the first index.
    let mut b: Vec<Option<f64>> = vec![None; n];
    for i in 1..n {
        let s = (p_t[i].round() as i64).max(1) as usize;
        let s = s.min(i);
        let window = if literal_head { &a[..s] } else { &a[i - s..i] };
        b[i] = Some(window.iter().sum::<f64>() / s as f64);
    }
    let fallback = (1..n)
        .filter_map(|i| match b[i] {
            Some(bi) if bi > 0.0 => Some(a[i] / bi),
            _ => None,
        })
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |m: f64| m.max(r))))
        .unwrap_or(1.0);
    let star: Vec<f64> = (0..n)
        .map(|i| match b[i] {
            Some(bi) if bi > 0.0 => a[i] / bi,
            Some(_) if a[i] == 0.0 => 1.0,
            _ => fallback,
        })
        .collect();
    let max = star.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        Ok(star.iter().map(|&v| v / max).collect())
    } else {
        // Every ratio vanished; the proxy carries no signal.
        Ok(star)
    }
}

/// Runs the full pre-estimation pipeline and assembles the weighted,
/// scaled three-dimensional feature rows.
pub fn build_features(x: &CountSeries, cfg: &RenesConfig, p_max: usize) -> Result<PreEstimates> {
    cfg.validate(p_max)?;
    let n = x.len();
    let width = 2 * cfg.d_p + 1;
    if n < width {
        return Err(Error::SeriesTooShort { needed: width, got: n });
    }
    let lit = cfg.literal;
    let mu = mu_pre(x);
    let mu_t = trimmed_seq_impl(&mu, &cfg.c_m, lit.trim_center)?;
    let p_tilde = p_pre_impl(x, cfg.d_p, p_max, lit.pacf_value)?;
    let alpha_tilde = alpha_pre_impl(x, &mu_t, &p_tilde, lit.alpha_head_mean)?;
    let alpha_t = trimmed_seq_impl(&alpha_tilde, &cfg.c_a, lit.trim_center)?;
    let p_t = trimmed_seq_impl(&p_tilde, &cfg.c_p, lit.trim_center)?;

    let s_m = scale_to_mean_one(&mu_t, "mean")?;
    let s_a = scale_to_mean_one(&alpha_t, "thinning")?;
    let s_p = scale_to_mean_one(&p_t, "order")?;
    let features = (0..n)
        .map(|i| {
            [
                cfg.impact_m * s_m[i],
                cfg.impact_a * s_a[i],
                cfg.impact_p * s_p[i],
            ]
        })
        .collect();
    Ok(PreEstimates { mu_t, alpha_t, p_t, features })
}
