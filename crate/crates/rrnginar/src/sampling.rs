//! Samplers: geometric draws, negative binomial thinning, the state-pair
//! innovation mixture, and the full process simulator.
//!
//! The innovation distribution is the one forced by requiring the stated
//! geometric marginal. Dividing probability generating functions,
//! `Phi_eps(s) = Phi_{Geom(mu_cur)}(s) / Phi_{Geom(mu_lag)}(phi_U(s))` with
//! `phi_U(s) = 1/(1 + alpha(1-s))` yields a two-component mixture:
//! geometric with mean `alpha` with probability
//! `w = alpha * mu_lag / (mu_cur - alpha)`, else geometric with mean
//! `mu_cur`. The identity `thinned lag + innovation = Geom(mu_cur)` is
//! verified by exact pmf convolution in the test suites; `w` leaves `[0, 1]`
//! exactly when the feasibility bound `alpha <= mu_cur/(1+mu_lag)` fails,
//! and such parameter sets are reported as errors rather than clamped.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    order_sequence, sample_env, validate_model, CountSeries, EnvChainSpec, EnvSequence,
    ModelParams, OrderRule, OrderSequence,
};
use crate::rng::{self, Stream};

/// Two-component geometric mixture for the innovation term of one
/// `(current state, lag state)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationMixture {
    /// Probability of drawing from the low-mean component.
    pub w: f64,
    /// Mean of the low component (= alpha of the current state).
    pub mean_low: f64,
    /// Mean of the high component (= mu of the current state).
    pub mean_high: f64,
}

impl InnovationMixture {
    /// Mean of the mixture: `w * alpha + (1 - w) * mu_cur`, which simplifies
    /// to `mu_cur - alpha * mu_lag`.
    pub fn mean(&self) -> f64 {
        self.w * self.mean_low + (1.0 - self.w) * self.mean_high
    }

    pub fn pmf(&self, t: u64) -> f64 {
        self.w * geom_pmf_raw(self.mean_low, t) + (1.0 - self.w) * geom_pmf_raw(self.mean_high, t)
    }
}

pub(crate) fn geom_pmf_raw(mean: f64, t: u64) -> f64 {
    let t = t as f64;
    (t * mean.ln() - (t + 1.0) * mean.ln_1p()).exp()
}

/// Innovation mixture for a `(mu_cur, mu_lag, alpha)` combination.
///
/// Errors if the mixture weight would leave `[0, 1]`, i.e. if
/// `alpha > mu_cur / (1 + mu_lag)`.
pub fn innovation_params(mu_cur: f64, mu_lag: f64, alpha: f64) -> Result<InnovationMixture> {
    if !(mu_cur > 0.0 && mu_lag > 0.0) {
        return Err(Error::Domain(format!(
            "means must be positive, got mu_cur={mu_cur}, mu_lag={mu_lag}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha={alpha} outside (0, 1)")));
    }
    let w = alpha * mu_lag / (mu_cur - alpha);
    // Tolerate float slop right at the feasibility boundary (w == 1).
    if !(-1e-9..=1.0 + 1e-9).contains(&w) || mu_cur <= alpha {
        return Err(Error::Infeasible {
            lag_state: 0,
            cur_state: 0,
            alpha,
            bound: mu_cur / (1.0 + mu_lag),
        });
    }
    Ok(InnovationMixture {
        w: w.clamp(0.0, 1.0),
        mean_low: alpha,
        mean_high: mu_cur,
    })
}

/// Geometric draw on `{0, 1, ...}` with the given mean, by inverse transform
/// of the closed-form CDF. `P(U = u) = mean^u / (1 + mean)^(u + 1)`.
pub fn geom_sample(mean: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!("geometric mean must be positive, got {mean}")));
    }
    let u: f64 = rng.random();
    // q = mean/(1+mean); smallest v with 1 - q^(v+1) >= u.
    let ln_q = -(1.0 / mean).ln_1p();
    let t = (-u).ln_1p() / ln_q;
    Ok(t.ceil().max(1.0) as u64 - 1)
}

/// Negative binomial thinning `alpha * x`: the sum of `x` iid geometric
/// draws with mean `alpha`. Zero when `x = 0`.
pub fn nb_thin(alpha: f64, x: u64, rng: &mut ChaCha8Rng) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha={alpha} outside (0, 1)")));
    }
    let mut total = 0;
    for _ in 0..x {
        total += geom_sample(alpha, rng)?;
    }
    Ok(total)
}

fn innovation_sample(mix: &InnovationMixture, rng: &mut ChaCha8Rng) -> Result<u64> {
    let u: f64 = rng.random();
    let mean = if u < mix.w { mix.mean_low } else { mix.mean_high };
    geom_sample(mean, rng)
}

/// Environment source for the simulator: sample a fresh chain realization or
/// run against a fixed state sequence.
#[derive(Debug, Clone, Copy)]
pub enum EnvSource<'a> {
    Chain(&'a EnvChainSpec),
    Fixed(&'a EnvSequence),
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub x: CountSeries,
    pub z: EnvSequence,
    pub pn: OrderSequence,
    /// Lag selected at each step (0 where the marginal was drawn).
    pub chosen_lag: Vec<usize>,
}

/// Simulates `n` steps of the count recursion.
///
/// `x_1` comes from the marginal geometric of its state; for later steps a
/// lag `i` is drawn with probability `phi_{i, P_n}` for the current state,
/// and `x_n = alpha * x_{n-i} + eps` with `eps` from the pair's innovation
/// mixture. Streams: the chain, lag choices, thinning counters and
/// innovations each consume their own substream of `seed`, so a run is
/// reproducible bit-for-bit.
pub fn simulate(
    params: &ModelParams,
    env: EnvSource<'_>,
    n: usize,
    rule: OrderRule,
    seed: u64,
) -> Result<SimOutput> {
    if n == 0 {
        return Err(Error::Empty("requested series length"));
    }
    let z = match env {
        EnvSource::Chain(spec) => {
            let violations = validate_model(params, spec);
            if !violations.is_empty() {
                return Err(Error::InvalidModel(violations.join("; ")));
            }
            sample_env(spec, n, seed)?
        }
        EnvSource::Fixed(z) => {
            let violations = params.violations();
            if !violations.is_empty() {
                return Err(Error::InvalidModel(violations.join("; ")));
            }
            if z.len() != n {
                return Err(Error::LengthMismatch { left: z.len(), right: n });
            }
            z.check_states(params.r)?;
            z.clone()
        }
    };
    let pn = order_sequence(&z, params, rule)?;

    let mut lag_rng = rng::stream(seed, Stream::LagChoice);
    let mut thin_rng = rng::stream(seed, Stream::Thinning);
    let mut innov_rng = rng::stream(seed, Stream::Innovation);

    let mut x: Vec<u64> = Vec::with_capacity(n);
    let mut chosen_lag = Vec::with_capacity(n);

    for step in 1..=n {
        let state = z.z[step - 1];
        let mu = params.m[state - 1];
        let order = pn.pn[step - 1];
        if order == 0 {
            x.push(geom_sample(mu, &mut innov_rng)?);
            chosen_lag.push(0);
            continue;
        }
        let alpha = params.a[state - 1];
        let row = order.min(params.p[state - 1]);
        let lag = {
            let u: f64 = lag_rng.random();
            let mut acc = 0.0;
            let mut picked = row;
            for i in 1..=row {
                acc += params.lag_prob(state, row, i);
                if u < acc {
                    picked = i;
                    break;
                }
            }
            picked
        };
        let lag_state = z.z[step - 1 - lag];
        let mix = innovation_params(mu, params.m[lag_state - 1], alpha).map_err(|e| match e {
            Error::Infeasible { alpha, bound, .. } => Error::Infeasible {
                lag_state,
                cur_state: state,
                alpha,
                bound,
            },
            other => other,
        })?;
        let thinned = nb_thin(alpha, x[step - 1 - lag], &mut thin_rng)?;
        let eps = innovation_sample(&mix, &mut innov_rng)?;
        x.push(thinned + eps);
        chosen_lag.push(lag);
    }

    Ok(SimOutput {
        x: CountSeries::new(x),
        z,
        pn,
        chosen_lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Phi, Variant};
    use crate::presets;

    fn rng_for(seed: u64) -> ChaCha8Rng {
        rng::stream(seed, Stream::Thinning)
    }

    #[test]
    fn geom_sample_degenerate_mean() {
        let mut rng = rng_for(1);
        for _ in 0..100_000 {
            assert_eq!(geom_sample(1e-9, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn geom_sample_mean_one() {
        let mut rng = rng_for(2);
        let n = 1_000_000;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += geom_sample(1.0, &mut rng).unwrap();
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn geom_sample_mass_at_zero() {
        let mut rng = rng_for(3);
        let n = 1_000_000;
        let mean = 4.573;
        let mut zeros = 0u64;
        for _ in 0..n {
            if geom_sample(mean, &mut rng).unwrap() == 0 {
                zeros += 1;
            }
        }
        let p0 = zeros as f64 / n as f64;
        assert!((p0 - 1.0 / 5.573).abs() < 0.003, "p0 {p0}");
    }

    #[test]
    fn nb_thin_empty_sum() {
        let mut rng = rng_for(4);
        for _ in 0..100 {
            assert_eq!(nb_thin(0.5, 0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn nb_thin_conditional_mean() {
        let mut rng = rng_for(5);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += nb_thin(0.6, 10, &mut rng).unwrap();
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 6.0).abs() < 0.1, "mean {mean}");
    }

    /// pmf of the x-fold convolution of geometric(mean alpha) on {0..=top}.
    fn geom_convolution(alpha: f64, folds: usize, top: usize) -> Vec<f64> {
        let base: Vec<f64> = (0..=top as u64).map(|t| geom_pmf_raw(alpha, t)).collect();
        let mut acc = vec![0.0; top + 1];
        acc[0] = 1.0;
        for _ in 0..folds {
            let mut next = vec![0.0; top + 1];
            for (i, &a) in acc.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (j, &b) in base.iter().enumerate().take(top + 1 - i) {
                    next[i + j] += a * b;
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn nb_thin_matches_convolution_oracle() {
        let mut rng = rng_for(6);
        let n = 100_000usize;
        let top = 30;
        let mut hist = vec![0u64; top + 1];
        for _ in 0..n {
            let v = nb_thin(0.3, 2, &mut rng).unwrap() as usize;
            if v <= top {
                hist[v] += 1;
            }
        }
        let expect = geom_convolution(0.3, 2, top);
        for t in 0..=top {
            let emp = hist[t] as f64 / n as f64;
            assert!(
                (emp - expect[t]).abs() < 0.005,
                "t={t}: empirical {emp} vs exact {}",
                expect[t]
            );
        }
    }

    #[test]
    fn innovation_weight_examples() {
        // Boundary of the close-means preset: w = 0.9 / 0.9 = 1.
        let mix = innovation_params(1.5, 1.5, 0.6).unwrap();
        assert!((mix.w - 1.0).abs() < 1e-12);

        let mix = innovation_params(1.0, 1.5, 0.05).unwrap();
        assert!((mix.w - 0.075 / 0.95).abs() < 1e-12);

        // alpha -> 0 collapses onto the plain marginal.
        let mix = innovation_params(2.0, 5.0, 1e-12).unwrap();
        assert!(mix.w < 1e-11);
        assert_eq!(mix.mean_high, 2.0);

        assert!(innovation_params(1.0, 1.5, 0.5).is_err()); // 0.5 > 1/2.5
    }

    /// Load-bearing identity: thinning a geometric(mu_lag) count and adding
    /// the pair innovation reproduces geometric(mu_cur) exactly.
    #[test]
    fn thinned_plus_innovation_is_geometric() {
        let cases = [(1.0, 1.5, 0.05), (1.5, 1.5, 0.6), (5.0, 3.0, 0.5), (0.5, 1.5, 0.1)];
        let top = 120;
        for &(mu_cur, mu_lag, alpha) in &cases {
            let mix = innovation_params(mu_cur, mu_lag, alpha).unwrap();
            // P(alpha * X = t) for X ~ Geom(mu_lag), by direct summation.
            let x_top = 800;
            let mut thinned = vec![0.0; top + 1];
            for x in 0..=x_top {
                let px = geom_pmf_raw(mu_lag, x);
                if x == 0 {
                    thinned[0] += px;
                    continue;
                }
                let conv = geom_convolution(alpha, x as usize, top);
                for t in 0..=top {
                    thinned[t] += px * conv[t];
                }
            }
            for t in 0..=top as u64 {
                let mut p = 0.0;
                for k in 0..=t {
                    p += thinned[k as usize] * mix.pmf(t - k);
                }
                let target = geom_pmf_raw(mu_cur, t);
                assert!(
                    (p - target).abs() < 1e-10,
                    "({mu_cur},{mu_lag},{alpha}) t={t}: {p} vs {target}"
                );
            }
        }
    }

    #[test]
    fn simulate_single_state_marginal_mean() {
        let params = ModelParams {
            variant: Variant::Max,
            r: 1,
            m: vec![1.0],
            a: vec![1e-9],
            p: vec![2],
            phi: vec![Phi::Matrix(vec![vec![1.0], vec![0.5, 0.5]])],
        };
        let env = EnvChainSpec::new(vec![1.0], vec![vec![1.0]]).unwrap();
        let out = simulate(&params, EnvSource::Chain(&env), 100_000, OrderRule::Min, 7).unwrap();
        let mean = out.x.x.iter().sum::<u64>() as f64 / out.x.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn simulate_is_deterministic() {
        let (params, env) = presets::r2_close_means(Variant::Max);
        let a = simulate(&params, EnvSource::Chain(&env), 500, OrderRule::Min, 99).unwrap();
        let b = simulate(&params, EnvSource::Chain(&env), 500, OrderRule::Min, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate(&params, EnvSource::Chain(&env), 500, OrderRule::Min, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn simulate_one_variant_order_support() {
        let (params, env) = presets::r2_close_means(Variant::One);
        let out = simulate(&params, EnvSource::Chain(&env), 2_000, OrderRule::Min, 11).unwrap();
        for (idx, &o) in out.pn.pn.iter().enumerate() {
            if idx == 0 {
                assert_eq!(o, 0);
                continue;
            }
            let p_j = params.p[out.z.z[idx] - 1];
            assert!(o == 1 || o == p_j, "step {idx}: order {o}");
            assert!(out.chosen_lag[idx] >= 1 && out.chosen_lag[idx] <= o);
        }
    }

    #[test]
    fn simulate_fixed_sequence_and_length_checks() {
        let (params, _) = presets::r2_close_means(Variant::Max);
        let z = EnvSequence::new(vec![1; 100]);
        let out = simulate(&params, EnvSource::Fixed(&z), 100, OrderRule::Min, 5).unwrap();
        assert_eq!(out.z, z);
        assert!(simulate(&params, EnvSource::Fixed(&z), 99, OrderRule::Min, 5).is_err());
        let env = EnvChainSpec::new(vec![1.0], vec![vec![1.0]]).unwrap();
        assert!(matches!(
            simulate(&params, EnvSource::Chain(&env), 0, OrderRule::Min, 5),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn simulate_frozen_state_stays_near_marginal() {
        // Lighter version of the acceptance marginal check: one preset, state 2.
        let (params, _) = presets::r2_close_means(Variant::Max);
        let z = EnvSequence::new(vec![2; 100_000]);
        let out = simulate(&params, EnvSource::Fixed(&z), 100_000, OrderRule::Min, 21).unwrap();
        let mean = out.x.x.iter().sum::<u64>() as f64 / out.x.len() as f64;
        assert!((mean - 1.5).abs() < 0.1, "mean {mean}");
    }
}
