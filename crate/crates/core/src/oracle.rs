//! Finite-difference check of the exact gradient on small truncated models.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{truncated_log_likelihood, HarmoniumParams, ModelDims, Observation, TruncationSpec};
use crate::rng;
use crate::train::exact_gradient;

/// Random parameters for the canonical tiny model (M=2, K=1, J=2).
pub fn canonical_params(seed: u64) -> HarmoniumParams {
    let mut r = rng::from_seed(seed);
    let mut u = |lo: f64, hi: f64| r.random_range(lo..hi);
    let alpha = alloc::vec![u(-1.5, -0.2), u(-1.5, -0.2)];
    let beta = alloc::vec![u(-0.5, 0.5)];
    let sigma = alloc::vec![u(0.6, 1.0)];
    let w = Matrix::from_row_major(2, 2, (0..4).map(|_| u(-0.15, 0.15)).collect());
    let cu = Matrix::from_row_major(1, 2, (0..2).map(|_| u(-0.3, 0.3)).collect());
    HarmoniumParams {
        dims: ModelDims {
            words: 2,
            bins: 1,
            aspects: 2,
        },
        alpha,
        beta,
        sigma,
        w,
        u: cu,
    }
}

/// `x_max = 8`, 41-point grid on `[-6, 6]`.
pub fn canonical_truncation() -> TruncationSpec {
    TruncationSpec::uniform(8, 1, -6.0, 6.0, 41).expect("static truncation is valid")
}

/// Observations with counts in `0..=4` and bins in `[-2, 2)`.
pub fn random_batch(dims: ModelDims, n: usize, seed: u64) -> Vec<Observation> {
    let mut r = rng::from_seed(seed);
    (0..n)
        .map(|_| {
            let x: Vec<u32> = (0..dims.words).map(|_| r.random_range(0..=4)).collect();
            let z: Vec<f64> = (0..dims.bins).map(|_| r.random_range(-2.0..2.0)).collect();
            Observation::from_dense(&x, &z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|a − n| / max(|a|, |n|)` per component.
    pub relative_errors: Vec<f64>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().cloned().fold(0.0, f64::max)
    }
}

fn flatten(p: &HarmoniumParams) -> Vec<f64> {
    let mut v = p.alpha.clone();
    v.extend_from_slice(&p.beta);
    v.extend(p.sigma.iter().map(|s| 1.0 / s));
    v.extend_from_slice(p.w.as_slice());
    v.extend_from_slice(p.u.as_slice());
    v
}

fn unflatten(template: &HarmoniumParams, v: &[f64]) -> HarmoniumParams {
    let (m, k, j) = (template.dims.words, template.dims.bins, template.dims.aspects);
    let mut p = template.clone();
    p.alpha = v[..m].to_vec();
    p.beta = v[m..m + k].to_vec();
    p.sigma = v[m + k..m + 2 * k].iter().map(|s| 1.0 / s).collect();
    let o = m + 2 * k;
    p.w = Matrix::from_row_major(m, j, v[o..o + m * j].to_vec());
    p.u = Matrix::from_row_major(k, j, v[o + m * j..].to_vec());
    p
}

/// Compares [`exact_gradient`] with central differences (step `h`) of the
/// average truncated log-likelihood, in `(α, β, σ⁻¹, W, U)` coordinates.
pub fn check_gradient(
    params: &HarmoniumParams,
    batch: &[Observation],
    trunc: &TruncationSpec,
    h: f64,
) -> Result<GradientCheck> {
    let analytic = exact_gradient(params, batch, trunc)?.flatten();
    let base = flatten(params);
    let mut numeric = Vec::with_capacity(base.len());
    for c in 0..base.len() {
        let mut up = base.clone();
        let mut down = base.clone();
        up[c] += h;
        down[c] -= h;
        let f_up = truncated_log_likelihood(&unflatten(params, &up), batch, trunc)?;
        let f_down = truncated_log_likelihood(&unflatten(params, &down), batch, trunc)?;
        numeric.push((f_up - f_down) / (2.0 * h));
    }
    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .collect();
    Ok(GradientCheck {
        analytic,
        numeric,
        relative_errors,
    })
}
