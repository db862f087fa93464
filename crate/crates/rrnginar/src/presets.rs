//! Ready-made parameter sets and method configurations.
//!
//! These cover the regimes the estimation method is aimed at: states whose
//! means sit close together (so value-only clustering struggles) while the
//! thinning parameters and maximal orders separate them, plus three-state
//! versions with graded means. Each model preset comes with a matching
//! calibrated [`RenesConfig`].
//!
//! Transition matrices are stored column-conditionally (see
//! [`crate::model::EnvChainSpec`]); the literature usually prints the
//! row-conditional transpose of these same chains.

use crate::model::{EnvChainSpec, ModelParams, Phi, Variant};
use crate::preestimate::{LiteralSwitches, RenesConfig, WeightVector};

fn wv(c: &[f64]) -> WeightVector {
    WeightVector::new(c.to_vec()).expect("preset weight vector")
}

fn phi_set(variant: Variant, matrices: &[&[&[f64]]]) -> Vec<Phi> {
    match variant {
        Variant::Max => matrices
            .iter()
            .map(|rows| Phi::Matrix(rows.iter().map(|r| r.to_vec()).collect()))
            .collect(),
        // The `1` variant uses the full-order row of each matrix.
        Variant::One => matrices
            .iter()
            .map(|rows| Phi::Vector(rows.last().unwrap().to_vec()))
            .collect(),
    }
}

/// Two states with close means (1, 1.5) but strongly separated thinning
/// (0.05, 0.6) and orders (2, 4).
pub fn r2_close_means(variant: Variant) -> (ModelParams, EnvChainSpec) {
    let phi = phi_set(
        variant,
        &[
            &[&[1.0], &[0.9, 0.1]],
            &[
                &[1.0],
                &[0.1, 0.9],
                &[0.1, 0.45, 0.45],
                &[0.1, 0.1, 0.4, 0.4],
            ],
        ],
    );
    let params = ModelParams {
        variant,
        r: 2,
        m: vec![1.0, 1.5],
        a: vec![0.05, 0.6],
        p: vec![2, 4],
        phi,
    };
    let env = EnvChainSpec {
        r: 2,
        p_vec: vec![0.6, 0.4],
        p_mat: vec![vec![0.9, 0.2], vec![0.1, 0.8]],
    };
    (params, env)
}

/// Two states with similar thinning (0.4, 0.5) and means (3, 5); only the
/// orders (2, 5) separate the states clearly.
pub fn r2_similar_thinning(variant: Variant) -> (ModelParams, EnvChainSpec) {
    let phi = phi_set(
        variant,
        &[
            &[&[1.0], &[0.4, 0.6]],
            &[
                &[1.0],
                &[0.2, 0.8],
                &[0.4, 0.4, 0.2],
                &[0.3, 0.3, 0.3, 0.1],
                &[0.4, 0.2, 0.2, 0.1, 0.1],
            ],
        ],
    );
    let params = ModelParams {
        variant,
        r: 2,
        m: vec![3.0, 5.0],
        a: vec![0.4, 0.5],
        p: vec![2, 5],
        phi,
    };
    let env = EnvChainSpec {
        r: 2,
        p_vec: vec![0.5, 0.5],
        p_mat: vec![vec![0.8, 0.25], vec![0.2, 0.75]],
    };
    (params, env)
}

/// Three states with close means (0.5, 1, 1.5) and spread thinning.
pub fn r3_close_means(variant: Variant) -> (ModelParams, EnvChainSpec) {
    let phi = phi_set(
        variant,
        &[
            &[&[1.0], &[0.9, 0.1]],
            &[&[1.0], &[0.2, 0.8], &[0.2, 0.4, 0.4], &[0.2, 0.2, 0.3, 0.3]],
            &[&[1.0], &[0.1, 0.9]],
        ],
    );
    let params = ModelParams {
        variant,
        r: 3,
        m: vec![0.5, 1.0, 1.5],
        a: vec![0.1, 0.35, 0.6],
        p: vec![2, 4, 2],
        phi,
    };
    let env = EnvChainSpec {
        r: 3,
        p_vec: vec![0.3, 0.4, 0.3],
        p_mat: vec![
            vec![0.7, 0.1, 0.2],
            vec![0.2, 0.8, 0.2],
            vec![0.1, 0.1, 0.6],
        ],
    };
    (params, env)
}

/// Three states with graded means (2, 4, 6); each adjacent state pair shares
/// one similar parameter, so all three proxies carry signal.
pub fn r3_graded_means(variant: Variant) -> (ModelParams, EnvChainSpec) {
    let phi = phi_set(
        variant,
        &[
            &[&[1.0], &[0.7, 0.3]],
            &[&[1.0], &[0.5, 0.5], &[0.3, 0.3, 0.4], &[0.3, 0.2, 0.2, 0.3]],
            &[
                &[1.0],
                &[0.4, 0.6],
                &[0.2, 0.5, 0.3],
                &[0.25, 0.3, 0.2, 0.25],
                &[0.2, 0.2, 0.3, 0.1, 0.2],
            ],
        ],
    );
    let params = ModelParams {
        variant,
        r: 3,
        m: vec![2.0, 4.0, 6.0],
        a: vec![0.2, 0.3, 0.6],
        p: vec![2, 4, 5],
        phi,
    };
    let env = EnvChainSpec {
        r: 3,
        p_vec: vec![0.35, 0.35, 0.3],
        p_mat: vec![
            vec![0.9, 0.2, 0.1],
            vec![0.05, 0.7, 0.1],
            vec![0.05, 0.1, 0.8],
        ],
    };
    (params, env)
}

/// All model presets for both variants, handy for sweep-style tests.
pub fn all_model_presets() -> Vec<(ModelParams, EnvChainSpec)> {
    let mut out = Vec::new();
    for variant in [Variant::Max, Variant::One] {
        out.push(r2_close_means(variant));
        out.push(r2_similar_thinning(variant));
        out.push(r3_close_means(variant));
        out.push(r3_graded_means(variant));
    }
    out
}

fn cfg(d_p: usize, c_m: &[f64], c_a: &[f64], c_p: &[f64], impacts: [f64; 3]) -> RenesConfig {
    RenesConfig {
        d_p,
        c_m: wv(c_m),
        c_a: wv(c_a),
        c_p: wv(c_p),
        impact_m: impacts[0],
        impact_a: impacts[1],
        impact_p: impacts[2],
        literal: LiteralSwitches::default(),
    }
}

const C4: [f64; 4] = [0.16, 0.14, 0.14, 0.14];
const C3: [f64; 3] = [0.2, 0.2, 0.2];
const C2: [f64; 2] = [0.4, 0.3];

/// Calibrated method parameters for [`r2_close_means`].
pub fn renes_r2_close_means(variant: Variant) -> RenesConfig {
    match variant {
        Variant::Max => cfg(8, &C4, &C4, &C4, [6.0, 2.0, 9.0]),
        Variant::One => cfg(15, &C4, &C4, &C4, [8.0, 2.0, 3.0]),
    }
}

/// Calibrated method parameters for [`r2_similar_thinning`].
pub fn renes_r2_similar_thinning(variant: Variant) -> RenesConfig {
    match variant {
        Variant::Max => cfg(17, &C4, &C4, &C2, [4.0, 2.0, 3.0]),
        Variant::One => cfg(9, &C3, &C4, &C2, [9.0, 6.0, 7.0]),
    }
}

/// Calibrated method parameters for [`r3_close_means`].
pub fn renes_r3_close_means(variant: Variant) -> RenesConfig {
    match variant {
        Variant::Max => cfg(17, &C4, &C4, &C2, [9.0, 7.0, 2.0]),
        Variant::One => cfg(18, &C4, &C4, &C2, [6.0, 1.0, 8.0]),
    }
}

/// Calibrated method parameters for [`r3_graded_means`].
pub fn renes_r3_graded_means(variant: Variant) -> RenesConfig {
    match variant {
        Variant::Max => cfg(12, &C4, &C4, &C2, [10.0, 3.0, 1.0]),
        Variant::One => cfg(11, &C4, &C4, &C2, [7.0, 5.0, 2.0]),
    }
}
