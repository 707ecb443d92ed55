//! Fully factorized mean-field approximation.
//!
//! `q(x, z, h) = Π Poisson(x_i | ν_i) · Π N(z_k | μ_k, σ_k²) · Π N(h_j | γ_j, 1)`
//! with the fixed-point equations
//!
//! ```text
//! γ = Wᵀν + Uᵀμ
//! μ = σ² ⊙ (β + U γ)
//! ν = exp(α + W γ)
//! ```
//!
//! Either input block can be clamped to observed values, which turns the
//! solve into conditional inference (e.g. words given an image).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grad::{Gradients, Moments};
use crate::math::exp;
use crate::model::{log_rates_to_rates, HarmoniumParams, Observation, DEFAULT_EXP_CAP};

/// Variational means.
#[derive(Debug, Clone, PartialEq)]
pub struct GmfState {
    /// Poisson means, length M.
    pub nu: Vec<f64>,
    /// Gaussian means, length K.
    pub mu: Vec<f64>,
    /// Aspect means, length J.
    pub gamma: Vec<f64>,
}

impl GmfState {
    /// `γ = 0`, `μ = σ²β`, `ν = min(exp α, 1)`, with clamped blocks applied.
    pub fn initial(params: &HarmoniumParams, clamp: &Clamp) -> Self {
        let mut s = Self {
            nu: params.alpha.iter().map(|a| exp(*a).min(1.0)).collect(),
            mu: params
                .beta
                .iter()
                .zip(&params.sigma)
                .map(|(b, s)| s * s * b)
                .collect(),
            gamma: alloc::vec![0.0; params.dims.aspects],
        };
        clamp.apply(&mut s);
        s
    }
}

/// Observed values that replace a block of the variational state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clamp {
    pub x: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
}

impl Clamp {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn image(z: &[f64]) -> Self {
        Self {
            x: None,
            z: Some(z.to_vec()),
        }
    }

    pub fn words(x: &[f64]) -> Self {
        Self {
            x: Some(x.to_vec()),
            z: None,
        }
    }

    fn apply(&self, s: &mut GmfState) {
        if let Some(x) = &self.x {
            s.nu.clone_from(x);
        }
        if let Some(z) = &self.z {
            s.mu.clone_from(z);
        }
    }

    fn check(&self, params: &HarmoniumParams) -> Result<()> {
        if self.x.as_ref().is_some_and(|x| x.len() != params.dims.words) {
            return Err(Error::Shape(format!("clamped x must have length {}", params.dims.words)));
        }
        if self.z.as_ref().is_some_and(|z| z.len() != params.dims.bins) {
            return Err(Error::Shape(format!("clamped z must have length {}", params.dims.bins)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmfConfig {
    /// Stop once the re-substitution residual (max-norm) is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// `new = (1 − d)·update + d·old`.
    pub damping: f64,
    pub exp_cap: f64,
}

impl Default for GmfConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            damping: 0.3,
            exp_cap: DEFAULT_EXP_CAP,
        }
    }
}

impl GmfConfig {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter < 1 || !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "mean-field config needs tol > 0, max_iter >= 1, damping in [0, 1): {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmfSolution {
    pub state: GmfState,
    pub iterations: usize,
    /// Re-substitution residual of `state`.
    pub residual: f64,
    /// `false` when `max_iter` was reached first.
    pub converged: bool,
}

const DIVERGENCE_RUN: usize = 20;

fn update_gamma(params: &HarmoniumParams, nu: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut g = params.w.tr_mul_vec(nu);
    for (gj, v) in g.iter_mut().zip(params.u.tr_mul_vec(mu)) {
        *gj += v;
    }
    g
}

fn update_mu(params: &HarmoniumParams, gamma: &[f64]) -> Vec<f64> {
    let ug = params.u.mul_vec(gamma);
    (0..params.dims.bins)
        .map(|k| params.sigma[k] * params.sigma[k] * (params.beta[k] + ug[k]))
        .collect()
}

fn update_nu(params: &HarmoniumParams, gamma: &[f64], cap: f64) -> Result<Vec<f64>> {
    let wg = params.w.mul_vec(gamma);
    log_rates_to_rates(params.alpha.iter().zip(wg).map(|(a, v)| a + v), cap)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Max-norm distance between `state` and the simultaneous evaluation of the
/// fixed-point equations at `state`, over the unclamped blocks.
pub fn fixed_point_residual(
    params: &HarmoniumParams,
    state: &GmfState,
    clamp: &Clamp,
    exp_cap: f64,
) -> Result<f64> {
    let mut r = max_abs_diff(&update_gamma(params, &state.nu, &state.mu), &state.gamma);
    if clamp.z.is_none() {
        r = r.max(max_abs_diff(&update_mu(params, &state.gamma), &state.mu));
    }
    if clamp.x.is_none() {
        r = r.max(max_abs_diff(&update_nu(params, &state.gamma, exp_cap)?, &state.nu));
    }
    if r.is_nan() {
        r = f64::INFINITY;
    }
    Ok(r)
}

fn damp(old: &mut [f64], new: &[f64], d: f64) {
    for (o, n) in old.iter_mut().zip(new) {
        *o = (1.0 - d) * n + d * *o;
    }
}

/// Solves the fixed-point equations from the default initialization.
pub fn gmf_fixed_point(
    params: &HarmoniumParams,
    config: &GmfConfig,
    clamp: &Clamp,
) -> Result<GmfSolution> {
    clamp.check(params)?;
    gmf_fixed_point_from(params, config, clamp, GmfState::initial(params, clamp))
}

/// Solves the fixed-point equations from `init`. Clamped blocks of `init`
/// are overwritten by the clamp.
///
/// Each sweep updates `γ`, then `μ`, then `ν`, each damped. Iteration stops
/// when the re-substitution residual drops below `tol`. Twenty consecutive
/// residual increases are reported as [`Error::Divergence`].
pub fn gmf_fixed_point_from(
    params: &HarmoniumParams,
    config: &GmfConfig,
    clamp: &Clamp,
    init: GmfState,
) -> Result<GmfSolution> {
    config.check()?;
    params.check_shapes()?;
    clamp.check(params)?;
    let mut state = init;
    if state.nu.len() != params.dims.words
        || state.mu.len() != params.dims.bins
        || state.gamma.len() != params.dims.aspects
    {
        return Err(Error::Shape("initial mean-field state does not match model".into()));
    }
    clamp.apply(&mut state);

    let d = config.damping;
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    for iter in 0..config.max_iter {
        let residual = fixed_point_residual(params, &state, clamp, config.exp_cap)?;
        if residual < config.tol {
            return Ok(GmfSolution {
                state,
                iterations: iter,
                residual,
                converged: true,
            });
        }
        if !residual.is_finite() {
            return Err(Error::Divergence {
                iterations: iter,
                residual,
            });
        }
        if residual > prev {
            rising += 1;
            if rising >= DIVERGENCE_RUN {
                return Err(Error::Divergence {
                    iterations: iter,
                    residual,
                });
            }
        } else {
            rising = 0;
        }
        prev = residual;

        let g = update_gamma(params, &state.nu, &state.mu);
        damp(&mut state.gamma, &g, d);
        if clamp.z.is_none() {
            let m = update_mu(params, &state.gamma);
            damp(&mut state.mu, &m, d);
        }
        if clamp.x.is_none() {
            let n = update_nu(params, &state.gamma, config.exp_cap)?;
            damp(&mut state.nu, &n, d);
        }
    }
    let residual = fixed_point_residual(params, &state, clamp, config.exp_cap)?;
    Ok(GmfSolution {
        converged: residual < config.tol,
        state,
        iterations: config.max_iter,
        residual,
    })
}

/// Model-side moments under `q` at `state`.
///
/// With `γ' = Wᵀν + Uᵀμ`, `Var_q(x_i) = ν_i` and `Var_q(z_k) = σ_k²`:
/// `E[x_i h'_j] = ν_i γ'_j + W_ij ν_i`, `E[z_k h'_j] = μ_k γ'_j + U_kj σ_k²`,
/// `E[z_k²] = μ_k² + σ_k²`.
pub fn variational_moments(params: &HarmoniumParams, state: &GmfState) -> VariationalMoments {
    let gp = update_gamma(params, &state.nu, &state.mu);
    let dims = params.dims;
    let mut m = Moments::zeros(dims);
    for i in 0..dims.words {
        let nu = state.nu[i];
        m.x[i] = nu;
        for j in 0..dims.aspects {
            m.xh[(i, j)] = nu * gp[j] + params.w[(i, j)] * nu;
        }
    }
    for k in 0..dims.bins {
        let (mu, s) = (state.mu[k], params.sigma[k]);
        m.z[k] = mu;
        m.z_sq_inv_sigma[k] = (mu * mu + s * s) / s;
        for j in 0..dims.aspects {
            m.zh[(k, j)] = mu * gp[j] + params.u[(k, j)] * s * s;
        }
    }
    VariationalMoments(m)
}

/// Expectations under `q`: `x`, `z`, `z²σ⁻¹`, `x h'ᵀ`, `z h'ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalMoments(pub(crate) Moments);

impl VariationalMoments {
    pub fn x(&self) -> &[f64] {
        &self.0.x
    }
    pub fn z(&self) -> &[f64] {
        &self.0.z
    }
    pub fn z_sq_inv_sigma(&self) -> &[f64] {
        &self.0.z_sq_inv_sigma
    }
    pub fn xh(&self) -> &crate::linalg::Matrix {
        &self.0.xh
    }
    pub fn zh(&self) -> &crate::linalg::Matrix {
        &self.0.zh
    }
}

/// Gradient with model expectations taken under the unclamped mean-field
/// fixed point. Fails if that solve diverges or does not converge.
pub fn gmf_gradient(
    params: &HarmoniumParams,
    batch: &[Observation],
    config: &GmfConfig,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for obs in batch {
        params.check_observation(obs)?;
    }
    let sol = gmf_fixed_point(params, config, &Clamp::none())?;
    if !sol.converged {
        return Err(Error::Divergence {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    let model = variational_moments(params, &sol.state);
    let data = Moments::of_batch(params, batch);
    Ok(Moments::gradient(&data, &model.0))
}

/// Ranks words for an image: solves with `z` clamped and sorts by `ν`
/// descending, ties by ascending word index.
pub fn annotate(
    params: &HarmoniumParams,
    z: &[f64],
    top_n: usize,
    config: &GmfConfig,
) -> Result<Vec<(usize, f64)>> {
    if top_n == 0 || top_n > params.dims.words {
        return Err(Error::Config(format!(
            "top_n must be in 1..={}, got {top_n}",
            params.dims.words
        )));
    }
    let sol = gmf_fixed_point(params, config, &Clamp::image(z))?;
    if !sol.converged {
        return Err(Error::Divergence {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    let mut ranked: Vec<(usize, f64)> = sol.state.nu.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}
