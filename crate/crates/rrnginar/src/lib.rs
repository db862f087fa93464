//! Count time series driven by a hidden Markov "random environment".
//!
//! The model family implemented here is the generalized random environment
//! INAR process of higher order with geometric marginals and negative
//! binomial thinning, usually written `RrNGINAR(M, A, P)`. An auxiliary
//! Markov chain `{z_n}` picks, at every time step, the marginal mean
//! `mu_{z_n}`, the thinning parameter `alpha_{z_n}` and the maximal
//! autoregressive order `p_{z_n}` of the count recursion.
//!
//! The crate provides:
//!
//! * exact simulation of the process ([`sampling::simulate`]),
//! * estimation of the hidden environment sequence from a raw count series,
//!   either by plain K-means on the values ([`cluster::baseline_states`]) or
//!   by the RENES transformation-then-cluster method
//!   ([`cluster::renes_states`]),
//! * calibration searches for the RENES method parameters
//!   ([`cluster::search_dp`], [`cluster::search_impacts`]),
//! * conditional maximum likelihood fitting and one-step prediction given a
//!   state sequence ([`likelihood::cml_fit`], [`likelihood::predict`]),
//! * a batch experiment driver ([`pipeline::run_pipeline`]) and a CLI
//!   (`rrnginar simulate|estimate|calibrate|fit-eval|pipeline`).
//!
//! All randomness flows through seeded, stream-split ChaCha generators
//! ([`rng`]), so every entry point is reproducible bit-for-bit given a seed.

pub mod cluster;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod model;
mod optim;
pub mod pipeline;
pub mod preestimate;
pub mod presets;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use model::{
    consecutive_run, order_sequence, sample_env, validate_model, CountSeries, EnvChainSpec,
    EnvSequence, ModelParams, OrderRule, OrderSequence, Phi, Variant,
};
pub use sampling::{simulate, EnvSource, SimOutput};
