//! Model definition: environment chain, parameter set, order sequences.
//!
//! States are numbered `1..=r` throughout, matching the usual notation for
//! these models. The transition matrix is stored column-conditionally:
//! `p_mat[i][j] = P(Z_n = i+1 | Z_{n-1} = j+1)`, i.e. **columns** are
//! probability distributions. Beware when loading matrices quoted in
//! row-conditional form (rows summing to one): those must be transposed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use rand::Rng;

const PROB_TOL: f64 = 1e-12;

/// How the working order `P_n` is derived from the run length `p*_n` and the
/// per-state cap `p_{z_n}` in the `max` model variant.
///
/// The defining papers print `P_n = max{p*_n, p_{z_n}}` while also calling
/// `p_{z_n}` the maximal value `P_n` may take; the two statements are only
/// consistent under `min`. `Min` is therefore the default, with `LiteralMax`
/// available for the printed form. Under `LiteralMax` the lag-choice
/// probabilities are taken from row `min(P_n, p_{z_n})` of the mixing matrix,
/// since no probabilities exist beyond row `p_{z_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    #[default]
    Min,
    LiteralMax,
}

/// Model variant: how `P_n` reacts to the environment run length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `P_n` follows the run length up to the per-state cap.
    Max,
    /// `P_n` is 1 until the run length reaches the cap, then exactly the cap.
    One,
}

/// Markov chain over `r` environment states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvChainSpec {
    pub r: usize,
    /// Initial state distribution over states `1..=r`.
    pub p_vec: Vec<f64>,
    /// `p_mat[i][j] = P(Z_n = i+1 | Z_{n-1} = j+1)`; columns sum to 1.
    pub p_mat: Vec<Vec<f64>>,
}

impl EnvChainSpec {
    pub fn new(p_vec: Vec<f64>, p_mat: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self {
            r: p_vec.len(),
            p_vec,
            p_mat,
        };
        let violations = spec.violations();
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidModel(violations.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.r == 0 {
            v.push("state count r must be >= 1".into());
            return v;
        }
        if self.p_vec.len() != self.r {
            v.push(format!("p_vec has {} entries, expected r={}", self.p_vec.len(), self.r));
        }
        if self.p_vec.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            v.push("p_vec entries must lie in [0, 1]".into());
        }
        let s: f64 = self.p_vec.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            v.push(format!("p_vec sums to {s}, expected 1"));
        }
        if self.p_mat.len() != self.r || self.p_mat.iter().any(|row| row.len() != self.r) {
            v.push(format!("p_mat must be {r}x{r}", r = self.r));
            return v;
        }
        for j in 0..self.r {
            let mut col = 0.0;
            for i in 0..self.r {
                if self.p_mat[i][j] < 0.0 {
                    v.push(format!("p_mat[{}][{}] is negative", i + 1, j + 1));
                }
                col += self.p_mat[i][j];
            }
            if (col - 1.0).abs() > PROB_TOL {
                v.push(format!("p_mat column {} sums to {col}, expected 1", j + 1));
            }
        }
        v
    }

    /// Ordered state pairs `(lag_state, cur_state)` that can occur as
    /// `(z_{n-i}, z_n)` for some lag `i in 1..=max_lag`, i.e. pairs connected
    /// by a positive-probability path of length `<= max_lag`.
    pub fn reachable_pairs(&self, max_lag: usize) -> Vec<(usize, usize)> {
        let r = self.r;
        // step[a][b]: one-step a -> b possible (column convention: p_mat[b][a]).
        let one_step: Vec<Vec<bool>> = (0..r)
            .map(|a| (0..r).map(|b| self.p_mat[b][a] > 0.0).collect())
            .collect();
        let mut reach = one_step.clone();
        let mut acc = one_step.clone();
        for _ in 1..max_lag {
            let mut next = vec![vec![false; r]; r];
            for a in 0..r {
                for m in 0..r {
                    if reach[a][m] {
                        for b in 0..r {
                            next[a][b] |= one_step[m][b];
                        }
                    }
                }
            }
            for a in 0..r {
                for b in 0..r {
                    acc[a][b] |= next[a][b];
                }
            }
            reach = next;
        }
        let mut pairs = Vec::new();
        for a in 0..r {
            for b in 0..r {
                if acc[a][b] {
                    pairs.push((a + 1, b + 1));
                }
            }
        }
        pairs
    }
}

/// Per-state lag-choice probabilities.
///
/// `Matrix` (the `max` variant) stores one row per possible order `q`; row
/// `q` holds `phi_{1,q} .. phi_{q,q}`. Rows may be given ragged (row `q` of
/// length `q`) or square with a zero upper triangle. `Vector` (the `1`
/// variant) is the lag distribution used when `P_n = p_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Phi {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
}

impl Phi {
    fn check(&self, variant: Variant, p_j: usize, state: usize, v: &mut Vec<String>) {
        match (variant, self) {
            (Variant::Max, Phi::Matrix(rows)) => {
                if rows.len() != p_j {
                    v.push(format!("phi[{state}] must have {p_j} rows, found {}", rows.len()));
                    return;
                }
                for (qi, row) in rows.iter().enumerate() {
                    let q = qi + 1;
                    if row.len() != q && row.len() != p_j {
                        v.push(format!(
                            "phi[{state}] row {q} must have {q} (ragged) or {p_j} (square) entries"
                        ));
                        continue;
                    }
                    if row.iter().any(|&x| x < 0.0) {
                        v.push(format!("phi[{state}] row {q} has negative entries"));
                    }
                    if row.len() == p_j && row[q..].iter().any(|&x| x != 0.0) {
                        v.push(format!("phi[{state}] row {q} must be zero above the diagonal"));
                    }
                    let s: f64 = row[..q].iter().sum();
                    if (s - 1.0).abs() > PROB_TOL {
                        v.push(format!("phi[{state}] row {q} sums to {s}, expected 1"));
                    }
                }
            }
            (Variant::One, Phi::Vector(row)) => {
                if row.len() != p_j {
                    v.push(format!("phi[{state}] must have {p_j} entries, found {}", row.len()));
                    return;
                }
                if row.iter().any(|&x| x < 0.0) {
                    v.push(format!("phi[{state}] has negative entries"));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > PROB_TOL {
                    v.push(format!("phi[{state}] sums to {s}, expected 1"));
                }
            }
            (Variant::Max, Phi::Vector(_)) => {
                v.push(format!("phi[{state}]: max variant requires a matrix"));
            }
            (Variant::One, Phi::Matrix(_)) => {
                v.push(format!("phi[{state}]: `1` variant requires a vector"));
            }
        }
    }
}

/// Full parameter set of an `RrNGINAR(M, A, P)` model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub variant: Variant,
    pub r: usize,
    /// Per-state marginal geometric means `mu_j > 0`.
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    /// Per-state thinning parameters `alpha_j in (0, 1)`.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    /// Per-state maximal orders `p_j >= 1`.
    #[serde(rename = "P")]
    pub p: Vec<usize>,
    /// Per-state lag-choice probabilities, shaped by `variant`.
    pub phi: Vec<Phi>,
}

impl ModelParams {
    pub fn max_order(&self) -> usize {
        self.p.iter().copied().max().unwrap_or(0)
    }

    /// Probability of picking lag `lag` when the model operates at `order`
    /// in `state`. `order` must already be capped to `1..=p_{state}`.
    pub fn lag_prob(&self, state: usize, order: usize, lag: usize) -> f64 {
        debug_assert!(lag >= 1 && lag <= order);
        match &self.phi[state - 1] {
            Phi::Matrix(rows) => rows[order - 1][lag - 1],
            Phi::Vector(row) => {
                if order == 1 {
                    if lag == 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    row[lag - 1]
                }
            }
        }
    }

    /// Structural violations of the parameter set itself (no chain).
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.r == 0 {
            v.push("state count r must be >= 1".into());
            return v;
        }
        for (name, len) in [("M", self.m.len()), ("A", self.a.len()), ("P", self.p.len()), ("phi", self.phi.len())] {
            if len != self.r {
                v.push(format!("{name} has {len} entries, expected r={}", self.r));
            }
        }
        if !v.is_empty() {
            return v;
        }
        for j in 0..self.r {
            if !(self.m[j] > 0.0 && self.m[j].is_finite()) {
                v.push(format!("M[{}] must be a positive real", j + 1));
            }
            if !(self.a[j] > 0.0 && self.a[j] < 1.0) {
                v.push(format!("A[{}] must lie in (0, 1)", j + 1));
            }
            if self.p[j] == 0 {
                v.push(format!("P[{}] must be >= 1", j + 1));
            } else {
                self.phi[j].check(self.variant, self.p[j], j + 1, &mut v);
            }
        }
        v
    }

    /// Feasibility bound for `alpha_j` against a set of possible lag states:
    /// `alpha_j <= min_i mu_j / (1 + mu_i)`.
    pub fn alpha_bound(&self, cur_state: usize, lag_states: impl IntoIterator<Item = usize>) -> f64 {
        let mu_j = self.m[cur_state - 1];
        lag_states
            .into_iter()
            .map(|i| mu_j / (1.0 + self.m[i - 1]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Validates a parameter set against its environment chain.
///
/// Returns the list of violated invariants (empty means valid), including
/// the innovation feasibility inequality `alpha_j <= mu_j / (1 + mu_i)` for
/// every chain-reachable `(lag state i, current state j)` pair.
pub fn validate_model(params: &ModelParams, env: &EnvChainSpec) -> Vec<String> {
    let mut v = params.violations();
    v.extend(env.violations());
    if env.r != params.r {
        v.push(format!("chain has r={}, model has r={}", env.r, params.r));
    }
    if !v.is_empty() {
        return v;
    }
    for (lag_state, cur_state) in env.reachable_pairs(params.max_order()) {
        let bound = params.m[cur_state - 1] / (1.0 + params.m[lag_state - 1]);
        if params.a[cur_state - 1] > bound + PROB_TOL {
            v.push(format!(
                "alpha[{cur_state}]={} exceeds feasibility bound mu[{cur_state}]/(1+mu[{lag_state}])={bound}",
                params.a[cur_state - 1]
            ));
        }
    }
    v
}

/// Environment state sequence; values in `1..=r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSequence {
    pub z: Vec<usize>,
}

impl EnvSequence {
    pub fn new(z: Vec<usize>) -> Self {
        Self { z }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn check_states(&self, r: usize) -> Result<()> {
        match self.z.iter().position(|&s| s < 1 || s > r) {
            None => Ok(()),
            Some(i) => Err(Error::Domain(format!(
                "state {} at index {} outside 1..={r}",
                self.z[i],
                i + 1
            ))),
        }
    }
}

/// Observed (or simulated) count series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    pub x: Vec<u64>,
}

impl CountSeries {
    pub fn new(x: Vec<u64>) -> Self {
        Self { x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Values as reals, which is how the estimation pipeline consumes them.
    pub fn as_f64(&self) -> Vec<f64> {
        self.x.iter().map(|&v| v as f64).collect()
    }
}

/// Working-order sequence `P_n`. `pn[0]` is 0 by convention: the first
/// element has no autoregressive term and is drawn from its marginal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSequence {
    pub pn: Vec<usize>,
}

impl OrderSequence {
    pub fn len(&self) -> usize {
        self.pn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pn.is_empty()
    }
}

/// Number of mutually equal predecessors of `z_n`:
/// `p*_n = max{i >= 1 : z_{n-i} = ... = z_{n-1}}` (so at most `n - 1`).
///
/// `n` is 1-based and must satisfy `2 <= n <= N`.
pub fn consecutive_run(z: &EnvSequence, n: usize) -> Result<usize> {
    let len = z.len();
    if n < 2 || n > len {
        return Err(Error::IndexOutOfRange { index: n, len });
    }
    let head = z.z[n - 2];
    let mut run = 1;
    while run < n - 1 && z.z[n - 2 - run] == head {
        run += 1;
    }
    Ok(run)
}

/// Derives the working-order sequence `P_n` from a state sequence.
///
/// `P_1 = 0`; for `n >= 2` the `max` variant takes `min{p*_n, p_{z_n}}`
/// (or the literal `max{p*_n, p_{z_n}}` under [`OrderRule::LiteralMax`]),
/// and the `1` variant takes 1 while `p*_n < p_{z_n}` and `p_{z_n}` once the
/// run is long enough. Every value is additionally capped at `n - 1` so all
/// lags stay inside observed history.
pub fn order_sequence(z: &EnvSequence, params: &ModelParams, rule: OrderRule) -> Result<OrderSequence> {
    z.check_states(params.r)?;
    let n_len = z.len();
    let mut pn = Vec::with_capacity(n_len);
    if n_len > 0 {
        pn.push(0);
    }
    for n in 2..=n_len {
        let p_star = consecutive_run(z, n)?;
        let p_j = params.p[z.z[n - 1] - 1];
        let order = match params.variant {
            Variant::Max => match rule {
                OrderRule::Min => p_star.min(p_j),
                OrderRule::LiteralMax => p_star.max(p_j),
            },
            Variant::One => {
                if p_star < p_j {
                    1
                } else {
                    p_j
                }
            }
        };
        pn.push(order.min(n - 1));
    }
    Ok(OrderSequence { pn })
}

/// Samples a state sequence of length `n` from the chain.
///
/// `z_1 ~ p_vec`; `z_k | z_{k-1} = j` follows column `j` of `p_mat`.
pub fn sample_env(env: &EnvChainSpec, n: usize, seed: u64) -> Result<EnvSequence> {
    let violations = env.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations.join("; ")));
    }
    if n == 0 {
        return Err(Error::Empty("requested sequence length"));
    }
    let mut rng = rng::stream(seed, Stream::EnvChain);
    let mut z = Vec::with_capacity(n);
    z.push(sample_categorical(&env.p_vec, rng.random::<f64>()));
    for _ in 1..n {
        let prev = *z.last().unwrap();
        let u = rng.random::<f64>();
        let col: Vec<f64> = (0..env.r).map(|i| env.p_mat[i][prev - 1]).collect();
        z.push(sample_categorical(&col, u));
    }
    Ok(EnvSequence { z })
}

/// Inverse-CDF draw from a categorical distribution; returns a 1-based index.
fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    // Guard against accumulated rounding in the final bin.
    probs.len()
}
