//! Parameters, observations, exact conditionals and unnormalized densities
//! of the dual-wing harmonium.
//!
//! With word counts `x ∈ ℕ^M`, histogram bins `z ∈ ℝ^K` and latent aspects
//! `h ∈ ℝ^J`, the joint log-density (up to the log-partition) is
//!
//! ```text
//! α·x − Σ log x_i! + β·z − ½ Σ z_k²/σ_k² − ½ |h|² + hᵀ(Wᵀx + Uᵀz)
//! ```
//!
//! which gives Poisson word conditionals with log-rate `α + W h`, Gaussian
//! bin conditionals `N(σ²(β + U h), σ²)`, and unit-variance Gaussian aspect
//! conditionals centred at `Wᵀx + Uᵀz`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetric_eigen, Matrix};
use crate::math::{dot, exp, ln, ln_factorial, LogSumExp};

/// Word-rate exponents above this are reported as overflow.
pub const DEFAULT_EXP_CAP: f64 = 30.0;
/// Lower bound applied to every `σ_k` produced by training.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Default state budget for exact enumeration.
pub const DEFAULT_STATE_BUDGET: f64 = 1e7;

/// Model sizes: `words` = M, `bins` = K, `aspects` = J.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub words: usize,
    pub bins: usize,
    pub aspects: usize,
}

impl ModelDims {
    pub fn new(words: usize, bins: usize, aspects: usize) -> Result<Self> {
        if words == 0 || aspects == 0 {
            return Err(Error::Shape(format!(
                "need at least one word and one aspect (M={words}, J={aspects})"
            )));
        }
        Ok(Self {
            words,
            bins,
            aspects,
        })
    }
}

/// All model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmoniumParams {
    pub dims: ModelDims,
    /// Word log-rate biases, length M.
    pub alpha: Vec<f64>,
    /// Bin biases, length K.
    pub beta: Vec<f64>,
    /// Conditional standard deviations of the bins, length K.
    pub sigma: Vec<f64>,
    /// Word–aspect couplings, M × J.
    pub w: Matrix,
    /// Bin–aspect couplings, K × J.
    pub u: Matrix,
}

impl HarmoniumParams {
    /// Checks shapes only; use [`validate_params`] for the value invariants.
    pub fn new(
        dims: ModelDims,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        sigma: Vec<f64>,
        w: Matrix,
        u: Matrix,
    ) -> Result<Self> {
        let p = Self {
            dims,
            alpha,
            beta,
            sigma,
            w,
            u,
        };
        p.check_shapes()?;
        Ok(p)
    }

    /// Zero biases and couplings with unit σ.
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            alpha: vec![0.0; dims.words],
            beta: vec![0.0; dims.bins],
            sigma: vec![1.0; dims.bins],
            w: Matrix::zeros(dims.words, dims.aspects),
            u: Matrix::zeros(dims.bins, dims.aspects),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dims;
        let bad = |what: &str, got: usize, want: usize| {
            Err(Error::Shape(format!("{what} has length {got}, expected {want}")))
        };
        if self.alpha.len() != d.words {
            return bad("alpha", self.alpha.len(), d.words);
        }
        if self.beta.len() != d.bins {
            return bad("beta", self.beta.len(), d.bins);
        }
        if self.sigma.len() != d.bins {
            return bad("sigma", self.sigma.len(), d.bins);
        }
        if self.w.rows() != d.words || self.w.cols() != d.aspects {
            return Err(Error::Shape(format!(
                "W is {}x{}, expected {}x{}",
                self.w.rows(),
                self.w.cols(),
                d.words,
                d.aspects
            )));
        }
        if self.u.rows() != d.bins || self.u.cols() != d.aspects {
            return Err(Error::Shape(format!(
                "U is {}x{}, expected {}x{}",
                self.u.rows(),
                self.u.cols(),
                d.bins,
                d.aspects
            )));
        }
        Ok(())
    }

    pub(crate) fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.x.len() != self.dims.words || obs.z.len() != self.dims.bins {
            return Err(Error::Shape(format!(
                "observation is (M={}, K={}), model is (M={}, K={})",
                obs.x.len(),
                obs.z.len(),
                self.dims.words,
                self.dims.bins
            )));
        }
        Ok(())
    }

    pub(crate) fn check_hidden(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dims.aspects {
            return Err(Error::Shape(format!(
                "hidden state has length {}, expected {}",
                h.len(),
                self.dims.aspects
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of `I − Uᵀ diag(σ²) U` (J × J).
    ///
    /// Positive exactly when `diag(1/σ²) − U Uᵀ` is positive definite, and
    /// cheap because J is small.
    pub fn integrability_margin(&self) -> f64 {
        let j = self.dims.aspects;
        let mut m = Matrix::identity(j);
        for k in 0..self.dims.bins {
            let s2 = self.sigma[k] * self.sigma[k];
            let row = self.u.row(k);
            for a in 0..j {
                for b in 0..j {
                    m[(a, b)] -= s2 * row[a] * row[b];
                }
            }
        }
        min_eigenvalue(&m)
    }

    /// Largest eigenvalue of `Uᵀ diag(σ²) U`.
    pub(crate) fn coupling_spectral_radius(&self) -> f64 {
        let j = self.dims.aspects;
        let mut m = Matrix::zeros(j, j);
        for k in 0..self.dims.bins {
            let s2 = self.sigma[k] * self.sigma[k];
            let row = self.u.row(k);
            for a in 0..j {
                for b in 0..j {
                    m[(a, b)] += s2 * row[a] * row[b];
                }
            }
        }
        symmetric_eigen(&m).values.first().copied().unwrap_or(0.0)
    }
}

/// Sparse non-negative integer count vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseCounts {
    len: usize,
    entries: Vec<(usize, u32)>,
}

impl SparseCounts {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            entries: Vec::new(),
        }
    }

    /// Builds from `(index, count)` pairs. Duplicate indices are summed,
    /// zero counts dropped.
    pub fn from_pairs(len: usize, pairs: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut entries: Vec<(usize, u32)> = Vec::new();
        for (i, c) in pairs {
            if i >= len {
                return Err(Error::Shape(format!("word index {i} out of range 0..{len}")));
            }
            if c > 0 {
                entries.push((i, c));
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(usize, u32)> = Vec::with_capacity(entries.len());
        for (i, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        Ok(Self {
            len,
            entries: merged,
        })
    }

    pub fn from_dense(counts: &[u32]) -> Self {
        Self {
            len: counts.len(),
            entries: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nonzero entries, sorted by index.
    pub fn nonzeros(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> u32 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map_or(0, |pos| self.entries[pos].1)
    }

    pub fn to_dense(&self) -> Vec<u32> {
        let mut d = vec![0; self.len];
        for &(i, c) in &self.entries {
            d[i] = c;
        }
        d
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1 as u64).sum()
    }

    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            len: self.len,
            entries: self
                .entries
                .iter()
                .filter(|_| factor > 0)
                .map(|&(i, c)| (i, c * factor))
                .collect(),
        }
    }
}

/// One paired sample: word counts and histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: SparseCounts,
    pub z: Vec<f64>,
}

impl Observation {
    pub fn new(x: SparseCounts, z: Vec<f64>) -> Result<Self> {
        if let Some(k) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("bin {k} is not finite")));
        }
        Ok(Self { x, z })
    }

    pub fn from_dense(x: &[u32], z: &[f64]) -> Self {
        Self {
            x: SparseCounts::from_dense(x),
            z: z.to_vec(),
        }
    }
}

/// Latent aspect values `h`.
pub type HiddenState = Vec<f64>;

/// Quadrature grid for one bin: `points` equally spaced nodes on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn nodes(&self) -> Vec<f64> {
        let step = (self.upper - self.lower) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.lower + step * i as f64)
            .collect()
    }

    /// Composite Simpson weights.
    pub fn weights(&self) -> Vec<f64> {
        let step = (self.upper - self.lower) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let c = if i == 0 || i + 1 == self.points {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * step / 3.0
            })
            .collect()
    }
}

/// Support truncation for exact enumeration: word counts `0..=x_max`, bins on
/// a per-bin Simpson grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSpec {
    pub x_max: u32,
    pub z_grid: Vec<GridSpec>,
    /// Maximum number of enumerated states.
    pub budget: f64,
}

impl TruncationSpec {
    pub fn new(x_max: u32, z_grid: Vec<GridSpec>) -> Result<Self> {
        let t = Self {
            x_max,
            z_grid,
            budget: DEFAULT_STATE_BUDGET,
        };
        t.check()?;
        Ok(t)
    }

    /// Same grid for every one of `bins` bins.
    pub fn uniform(x_max: u32, bins: usize, lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(
            x_max,
            vec![
                GridSpec {
                    lower,
                    upper,
                    points
                };
                bins
            ],
        )
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    fn check(&self) -> Result<()> {
        if self.x_max < 1 {
            return Err(Error::Config("x_max must be at least 1".into()));
        }
        for (k, g) in self.z_grid.iter().enumerate() {
            if g.points < 3 || g.points % 2 == 0 {
                return Err(Error::Config(format!(
                    "grid for bin {k} needs an odd point count >= 3, got {}",
                    g.points
                )));
            }
            if !(g.upper > g.lower) {
                return Err(Error::Config(format!("grid for bin {k} has empty range")));
            }
        }
        Ok(())
    }

    pub fn state_count(&self, words: usize) -> f64 {
        let xs = libm::pow(self.x_max as f64 + 1.0, words as f64);
        self.z_grid.iter().fold(xs, |acc, g| acc * g.points as f64)
    }
}

/// Validation outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Validity {
    pub violations: Vec<Violation>,
}

impl Validity {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(self.violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { field: &'static str, index: usize },
    NonPositiveSigma { bin: usize, value: f64 },
    /// `diag(1/σ²) − U Uᵀ` is not positive definite.
    NotIntegrable { min_eigenvalue: f64 },
}

/// Checks finiteness, `σ > 0`, and positive-definiteness of
/// `diag(1/σ²) − U Uᵀ`. Shape mismatches are reported as `Err`.
pub fn validate_params(params: &HarmoniumParams) -> Result<Validity> {
    params.check_shapes()?;
    let mut violations = Vec::new();
    let fields: [(&'static str, &[f64]); 5] = [
        ("alpha", &params.alpha),
        ("beta", &params.beta),
        ("sigma", &params.sigma),
        ("W", params.w.as_slice()),
        ("U", params.u.as_slice()),
    ];
    for (field, values) in fields {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            violations.push(Violation::NonFinite { field, index });
        }
    }
    for (bin, &value) in params.sigma.iter().enumerate() {
        if value <= 0.0 {
            violations.push(Violation::NonPositiveSigma { bin, value });
        }
    }
    if violations.is_empty() && params.dims.bins > 0 {
        let k = params.dims.bins;
        let mut a = Matrix::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                a[(r, c)] = -dot(params.u.row(r), params.u.row(c));
            }
            a[(r, r)] += 1.0 / (params.sigma[r] * params.sigma[r]);
        }
        let min = min_eigenvalue(&a);
        if !(min > 0.0) {
            violations.push(Violation::NotIntegrable {
                min_eigenvalue: min,
            });
        }
    }
    Ok(Validity { violations })
}

/// Mean of `p(h | x, z)`: `γ = Wᵀx + Uᵀz`.
pub fn hidden_conditional_mean(params: &HarmoniumParams, obs: &Observation) -> Result<Vec<f64>> {
    params.check_observation(obs)?;
    Ok(hidden_mean_unchecked(params, obs))
}

pub(crate) fn hidden_mean_unchecked(params: &HarmoniumParams, obs: &Observation) -> Vec<f64> {
    let mut g = params.u.tr_mul_vec(&obs.z);
    for &(i, c) in obs.x.nonzeros() {
        let c = c as f64;
        for (gj, w) in g.iter_mut().zip(params.w.row(i)) {
            *gj += c * w;
        }
    }
    g
}

/// Poisson rates `exp(α + W h)` with the default exponent cap.
pub fn word_rates(params: &HarmoniumParams, h: &[f64]) -> Result<Vec<f64>> {
    word_rates_capped(params, h, DEFAULT_EXP_CAP)
}

pub fn word_rates_capped(params: &HarmoniumParams, h: &[f64], cap: f64) -> Result<Vec<f64>> {
    params.check_hidden(h)?;
    log_rates_to_rates(
        (0..params.dims.words).map(|i| params.alpha[i] + dot(params.w.row(i), h)),
        cap,
    )
}

pub(crate) fn log_rates_to_rates(exponents: impl Iterator<Item = f64>, cap: f64) -> Result<Vec<f64>> {
    exponents
        .enumerate()
        .map(|(word, e)| {
            if e > cap || e.is_nan() {
                Err(Error::RateOverflow {
                    word,
                    exponent: e,
                    cap,
                })
            } else {
                Ok(exp(e))
            }
        })
        .collect()
}

/// Conditional bin means `σ²(β + U h)` and variances `σ²`.
pub fn image_conditional(params: &HarmoniumParams, h: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check_hidden(h)?;
    let mut mean = Vec::with_capacity(params.dims.bins);
    let mut var = Vec::with_capacity(params.dims.bins);
    for k in 0..params.dims.bins {
        let s2 = params.sigma[k] * params.sigma[k];
        mean.push(s2 * (params.beta[k] + dot(params.u.row(k), h)));
        var.push(s2);
    }
    Ok((mean, var))
}

/// Text and image terms that do not involve `h`.
fn input_terms(params: &HarmoniumParams, obs: &Observation) -> f64 {
    let mut v = 0.0;
    for &(i, c) in obs.x.nonzeros() {
        v += params.alpha[i] * c as f64 - ln_factorial(c);
    }
    for k in 0..params.dims.bins {
        let z = obs.z[k];
        let s = params.sigma[k];
        v += params.beta[k] * z - 0.5 * z * z / (s * s);
    }
    v
}

/// Unnormalized log joint density of `(x, z, h)`.
pub fn log_joint_unnorm(params: &HarmoniumParams, obs: &Observation, h: &[f64]) -> Result<f64> {
    params.check_observation(obs)?;
    params.check_hidden(h)?;
    let g = hidden_mean_unchecked(params, obs);
    Ok(input_terms(params, obs) - 0.5 * dot(h, h) + dot(h, &g))
}

/// Unnormalized log marginal of `(x, z)` with `h` integrated out. Differs
/// from `log ∫ exp(log_joint_unnorm) dh` by the constant `(J/2)·log 2π`.
pub fn log_marginal_unnorm(params: &HarmoniumParams, obs: &Observation) -> Result<f64> {
    params.check_observation(obs)?;
    let g = hidden_mean_unchecked(params, obs);
    Ok(input_terms(params, obs) + 0.5 * dot(&g, &g))
}

/// Materialized truncated support, shared by the exact partition function
/// and the exact model expectations.
pub(crate) struct TruncatedSupport {
    /// Per word-configuration: (counts, text log-terms, Wᵀx).
    pub words: Vec<(Vec<u32>, f64, Vec<f64>)>,
    /// Per bin-grid point: (z, image log-terms + log quadrature weight, Uᵀz).
    pub bins: Vec<(Vec<f64>, f64, Vec<f64>)>,
}

impl TruncatedSupport {
    pub fn build(params: &HarmoniumParams, trunc: &TruncationSpec) -> Result<Self> {
        params.check_shapes()?;
        trunc.check()?;
        if trunc.z_grid.len() != params.dims.bins {
            return Err(Error::Shape(format!(
                "truncation has {} bin grids, model has {} bins",
                trunc.z_grid.len(),
                params.dims.bins
            )));
        }
        let states = trunc.state_count(params.dims.words);
        if !(states <= trunc.budget) {
            return Err(Error::BudgetExceeded {
                states,
                budget: trunc.budget,
            });
        }
        validate_params(params)?.into_result()?;

        let m = params.dims.words;
        let j = params.dims.aspects;
        let mut words = Vec::new();
        let mut counts = vec![0u32; m];
        loop {
            let mut text = 0.0;
            let mut g = vec![0.0; j];
            for (i, &c) in counts.iter().enumerate() {
                if c > 0 {
                    text += params.alpha[i] * c as f64 - ln_factorial(c);
                    for (gj, w) in g.iter_mut().zip(params.w.row(i)) {
                        *gj += c as f64 * w;
                    }
                }
            }
            words.push((counts.clone(), text, g));
            if !odometer(&mut counts, trunc.x_max) {
                break;
            }
        }

        let nodes: Vec<Vec<f64>> = trunc.z_grid.iter().map(GridSpec::nodes).collect();
        let log_w: Vec<Vec<f64>> = trunc
            .z_grid
            .iter()
            .map(|g| g.weights().into_iter().map(ln).collect())
            .collect();
        let mut bins = Vec::new();
        let mut idx = vec![0usize; params.dims.bins];
        loop {
            let z: Vec<f64> = idx.iter().enumerate().map(|(k, &p)| nodes[k][p]).collect();
            let mut v = 0.0;
            for k in 0..params.dims.bins {
                let s = params.sigma[k];
                v += params.beta[k] * z[k] - 0.5 * z[k] * z[k] / (s * s) + log_w[k][idx[k]];
            }
            let g = params.u.tr_mul_vec(&z);
            bins.push((z, v, g));
            if !grid_odometer(&mut idx, &trunc.z_grid) {
                break;
            }
        }
        Ok(Self { words, bins })
    }

    /// Calls `f(word_state, bin_state, log_weight)` for every state, where
    /// `log_weight` is the log marginal plus the log quadrature weight.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        let j = self.words.first().map_or(0, |w| w.2.len());
        let mut g = vec![0.0; j];
        for (wi, (_, text, gx)) in self.words.iter().enumerate() {
            for (bi, (_, image, gz)) in self.bins.iter().enumerate() {
                for a in 0..j {
                    g[a] = gx[a] + gz[a];
                }
                f(wi, bi, text + image + 0.5 * dot(&g, &g));
            }
        }
    }

    pub fn log_partition(&self) -> f64 {
        let mut acc = LogSumExp::new();
        self.for_each(|_, _, v| acc.push(v));
        acc.value()
    }
}

fn odometer(counts: &mut [u32], max: u32) -> bool {
    for c in counts.iter_mut() {
        if *c < max {
            *c += 1;
            return true;
        }
        *c = 0;
    }
    false
}

fn grid_odometer(idx: &mut [usize], grids: &[GridSpec]) -> bool {
    for (p, g) in idx.iter_mut().zip(grids) {
        if *p + 1 < g.points {
            *p += 1;
            return true;
        }
        *p = 0;
    }
    false
}

/// Log-partition of the marginal over the truncated support:
/// `log Σ_x Σ_grid w(z) exp(log_marginal_unnorm(x, z))`.
pub fn log_partition_truncated(params: &HarmoniumParams, trunc: &TruncationSpec) -> Result<f64> {
    Ok(TruncatedSupport::build(params, trunc)?.log_partition())
}

/// Average exact log-likelihood of `batch` under the truncated model.
pub fn truncated_log_likelihood(
    params: &HarmoniumParams,
    batch: &[Observation],
    trunc: &TruncationSpec,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let log_z = log_partition_truncated(params, trunc)?;
    let mut total = 0.0;
    for obs in batch {
        total += log_marginal_unnorm(params, obs)?;
    }
    Ok(total / batch.len() as f64 - log_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(m: usize, k: usize, j: usize) -> ModelDims {
        ModelDims::new(m, k, j).unwrap()
    }

    #[test]
    fn zero_couplings_unit_sigma_is_valid() {
        let p = HarmoniumParams::zeros(dims(3, 2, 2));
        assert!(validate_params(&p).unwrap().is_ok());
    }

    #[test]
    fn strong_single_coupling_is_not_integrable() {
        let mut p = HarmoniumParams::zeros(dims(1, 1, 1));
        p.u[(0, 0)] = 2.0;
        let v = validate_params(&p).unwrap();
        match v.violations.as_slice() {
            [Violation::NotIntegrable { min_eigenvalue }] => {
                assert!((min_eigenvalue + 3.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_bin_coupling_is_integrable() {
        let mut p = HarmoniumParams::zeros(dims(1, 2, 1));
        p.u[(0, 0)] = 0.6;
        p.u[(1, 0)] = 0.6;
        assert!(validate_params(&p).unwrap().is_ok());
        assert!((p.integrability_margin() - 0.28).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let mut p = HarmoniumParams::zeros(dims(2, 1, 1));
        p.alpha.push(0.0);
        assert!(matches!(validate_params(&p), Err(Error::Shape(_))));
    }

    #[test]
    fn negative_sigma_and_nan_reported() {
        let mut p = HarmoniumParams::zeros(dims(2, 2, 1));
        p.sigma[1] = -0.5;
        p.w[(1, 0)] = f64::NAN;
        let v = validate_params(&p).unwrap();
        assert!(v.violations.contains(&Violation::NonPositiveSigma { bin: 1, value: -0.5 }));
        assert!(v.violations.contains(&Violation::NonFinite { field: "W", index: 1 }));
    }

    #[test]
    fn hidden_mean_direct_formula() {
        let mut p = HarmoniumParams::zeros(dims(1, 1, 1));
        p.w[(0, 0)] = 0.5;
        p.u[(0, 0)] = 0.25;
        let obs = Observation::from_dense(&[2], &[3.0]);
        assert_eq!(hidden_conditional_mean(&p, &obs).unwrap(), vec![1.75]);
    }

    #[test]
    fn word_rate_direct_and_overflow() {
        let mut p = HarmoniumParams::zeros(dims(2, 0, 1));
        p.w[(0, 0)] = 2f64.ln();
        p.w[(1, 0)] = 40.0;
        let r = word_rates_capped(&p, &[1.0], 100.0).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-15);
        match word_rates(&p, &[1.0]) {
            Err(Error::RateOverflow { word, .. }) => assert_eq!(word, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn image_conditional_direct() {
        let mut p = HarmoniumParams::zeros(dims(1, 1, 1));
        p.u[(0, 0)] = 0.7;
        let (mean, var) = image_conditional(&p, &[2.0]).unwrap();
        assert!((mean[0] - 1.4).abs() < 1e-15);
        assert_eq!(var, vec![1.0]);
    }

    #[test]
    fn all_zero_joint_is_zero() {
        let p = HarmoniumParams::zeros(dims(3, 2, 2));
        let obs = Observation::from_dense(&[0, 0, 0], &[0.0, 0.0]);
        assert_eq!(log_joint_unnorm(&p, &obs, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_marginal() {
        let mut p = HarmoniumParams::zeros(dims(1, 0, 1));
        p.w[(0, 0)] = 0.1;
        let obs = Observation::from_dense(&[3], &[]);
        let v = log_marginal_unnorm(&p, &obs).unwrap();
        assert!((v - (-6f64.ln() + 0.045)).abs() < 1e-14);
        assert!((v + 1.746_759_469_228).abs() < 1e-11);
    }

    #[test]
    fn poisson_normalizer_limit() {
        let p = HarmoniumParams::zeros(dims(1, 0, 1));
        let t = TruncationSpec::new(40, vec![]).unwrap();
        assert!((log_partition_truncated(&p, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_guard() {
        let p = HarmoniumParams::zeros(dims(8, 0, 1));
        let t = TruncationSpec::new(10, vec![]).unwrap();
        assert!(matches!(
            log_partition_truncated(&p, &t),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(TruncationSpec::uniform(3, 1, -1.0, 1.0, 4).is_err());
        assert!(TruncationSpec::uniform(0, 1, -1.0, 1.0, 5).is_err());
    }

    #[test]
    fn sparse_counts_merge_duplicates() {
        let s = SparseCounts::from_pairs(5, [(3, 1), (1, 2), (3, 4), (0, 0)]).unwrap();
        assert_eq!(s.nonzeros(), &[(1, 2), (3, 5)]);
        assert_eq!(s.to_dense(), vec![0, 2, 0, 5, 0]);
        assert!(SparseCounts::from_pairs(2, [(2, 1)]).is_err());
    }
}
