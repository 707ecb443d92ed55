//! Maximum-likelihood training by mini-batch gradient ascent.
//!
//! Parameters are initialized from the data (log word rates, per-bin
//! standard deviations, and a scaled truncated SVD of the design matrix for
//! the couplings), then updated with one of three gradient estimators:
//! contrastive divergence, mean field, or exact enumeration on a truncated
//! support (small models only). After every update the image couplings are
//! rescaled if the bin marginal stopped being integrable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::seq::SliceRandom;

use crate::corpus::{normalize_features, Corpus};
use crate::error::{Error, Result};
use crate::gibbs::{cd_gradient, GibbsConfig};
use crate::gmf::{gmf_gradient, GmfConfig};
use crate::grad::{Gradients, Moments};
use crate::linalg::{truncated_svd, Matrix};
use crate::math::{ln, sqrt};
use crate::model::{
    HarmoniumParams, ModelDims, Observation, TruncatedSupport, TruncationSpec, SIGMA_FLOOR,
};
use crate::rng::{self, derive_seed};

/// Default number of gradient-ascent epochs.
pub const DEFAULT_EPOCHS: usize = 1000;
/// Latent dimensionalities covered by the evaluation sweep.
pub const LATENT_DIMENSION_SWEEP: RangeInclusive<usize> = 5..=50;
/// Floor for the data-driven σ initialization.
pub const SIGMA_INIT_FLOOR: f64 = 1e-2;

/// Latent dimensions from the sweep range in increments of `step`.
pub fn latent_dimension_sweep(step: usize) -> Vec<usize> {
    LATENT_DIMENSION_SWEEP.step_by(step.max(1)).collect()
}

/// Gradient estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Contrastive divergence with `TrainConfig::gibbs`.
    Cd,
    /// Mean-field model expectations with `TrainConfig::gmf`.
    Gmf,
    /// Exact expectations by enumeration. Only for tiny models.
    Exact(TruncationSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// L2 decay applied to W and U only.
    pub weight_decay: f64,
    pub seed: u64,
    pub gibbs: GibbsConfig,
    pub gmf: GmfConfig,
    /// After a projection, `λ_min(I − Uᵀdiag(σ²)U)` equals this.
    pub projection_margin: f64,
    /// Rescale each observation's image so its sum equals its word count.
    pub normalize_features: bool,
    /// Scale applied to the right singular vectors for W₀, U₀.
    pub init_scale: f64,
    /// Keep W and U at zero and train only the biases and scales.
    pub freeze_couplings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Cd,
            learning_rate: 1e-2,
            epochs: DEFAULT_EPOCHS,
            batch_size: 100,
            momentum: 0.0,
            weight_decay: 1e-4,
            seed: 0,
            gibbs: GibbsConfig::default(),
            gmf: GmfConfig::default(),
            projection_margin: 0.05,
            normalize_features: true,
            init_scale: 0.01,
            freeze_couplings: false,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epochs >= 1
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.projection_margin > 0.0
            && self.projection_margin < 1.0
            && self.init_scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }
}

/// Wall-clock source for epoch timing.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero elapsed time; keeps training reports bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for SystemClock {
    fn default() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for SystemClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean Euclidean norm of the mini-batch gradients.
    pub grad_norm: f64,
    pub clamped_words: usize,
    /// Mini-batches skipped because the mean-field solve failed.
    pub gmf_divergences: usize,
    /// Mini-batches skipped because a sampled word rate overflowed.
    pub rate_overflows: usize,
    /// Updates after which U had to be rescaled.
    pub projections: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Observations left unscaled by feature normalization.
    pub flagged: Vec<usize>,
    /// Coupling columns without SVD support.
    pub svd_padded: usize,
}

/// Scaled SVD initialization of the couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdInit {
    pub w: Matrix,
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub padded: usize,
}

/// Rank-`aspects` truncated SVD of `[X | Z]`. The first M rows of the right
/// singular vectors become `W₀`, the last K rows `U₀`, both times `scale`.
pub fn svd_init(corpus: &Corpus, aspects: usize, scale: f64, seed: u64) -> Result<SvdInit> {
    if corpus.len() < aspects {
        return Err(Error::Config(format!(
            "SVD initialization needs at least {aspects} observations, got {}",
            corpus.len()
        )));
    }
    let a = corpus.design_matrix();
    if aspects > a.cols() {
        return Err(Error::Config(format!(
            "{aspects} aspects exceed the {} design-matrix columns",
            a.cols()
        )));
    }
    let svd = truncated_svd(&a, aspects, seed);
    let (m, k) = (corpus.words(), corpus.bins());
    let mut w = Matrix::zeros(m, aspects);
    let mut u = Matrix::zeros(k, aspects);
    for j in 0..aspects {
        for i in 0..m {
            w[(i, j)] = scale * svd.v[(i, j)];
        }
        for b in 0..k {
            u[(b, j)] = scale * svd.v[(m + b, j)];
        }
    }
    Ok(SvdInit {
        w,
        u,
        singular_values: svd.s,
        padded: svd.padded,
    })
}

/// Exact gradient of the average truncated log-likelihood of `batch`.
pub fn exact_gradient(
    params: &HarmoniumParams,
    batch: &[Observation],
    trunc: &TruncationSpec,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for obs in batch {
        params.check_observation(obs)?;
    }
    let support = TruncatedSupport::build(params, trunc)?;
    let log_z = support.log_partition();
    let sparse: Vec<Vec<(usize, f64)>> = support
        .words
        .iter()
        .map(|(counts, _, _)| {
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c as f64))
                .collect()
        })
        .collect();
    let mut model = Moments::zeros(params.dims);
    let mut h = vec![0.0; params.dims.aspects];
    support.for_each(|wi, bi, v| {
        let p = crate::math::exp(v - log_z);
        let (gx, gz) = (&support.words[wi].2, &support.bins[bi].2);
        for j in 0..h.len() {
            h[j] = gx[j] + gz[j];
        }
        model.accumulate_dense(params, &sparse[wi], &support.bins[bi].0, &h, p);
    });
    let data = Moments::of_batch(params, batch);
    Ok(Moments::gradient(&data, &model))
}

/// Rescales U so the bin marginal is integrable with `margin` to spare.
/// Returns whether a rescale happened.
pub fn project_integrable(params: &mut HarmoniumParams, margin: f64) -> bool {
    let rho = params.coupling_spectral_radius();
    if rho < 1.0 {
        return false;
    }
    let c = sqrt((1.0 - margin) / rho);
    params.u.scale(c);
    true
}

/// Data-driven starting point (see module docs). `corpus` is used as given.
pub fn initial_params(
    corpus: &Corpus,
    dims: ModelDims,
    config: &TrainConfig,
) -> Result<(HarmoniumParams, usize)> {
    let n = corpus.len() as f64;
    let mut alpha = vec![0.0; dims.words];
    let mut mean_z = vec![0.0; dims.bins];
    let mut sq_z = vec![0.0; dims.bins];
    for obs in &corpus.observations {
        for &(i, c) in obs.x.nonzeros() {
            alpha[i] += c as f64;
        }
        for (k, z) in obs.z.iter().enumerate() {
            mean_z[k] += z;
            sq_z[k] += z * z;
        }
    }
    for a in alpha.iter_mut() {
        *a = ln(*a / n + 1.0 / n);
    }
    let sigma = (0..dims.bins)
        .map(|k| {
            let mean = mean_z[k] / n;
            let var = (sq_z[k] / n - mean * mean).max(0.0);
            sqrt(var).max(SIGMA_INIT_FLOOR)
        })
        .collect();
    let (w, u, padded) = if config.freeze_couplings {
        (
            Matrix::zeros(dims.words, dims.aspects),
            Matrix::zeros(dims.bins, dims.aspects),
            0,
        )
    } else {
        let init = svd_init(corpus, dims.aspects, config.init_scale, config.seed)?;
        (init.w, init.u, init.padded)
    };
    let mut params = HarmoniumParams::new(dims, alpha, vec![0.0; dims.bins], sigma, w, u)?;
    project_integrable(&mut params, config.projection_margin);
    Ok((params, padded))
}

/// Trains with timing disabled.
pub fn train(
    corpus: &Corpus,
    dims: ModelDims,
    config: &TrainConfig,
) -> Result<(HarmoniumParams, TrainReport)> {
    train_with_clock(corpus, dims, config, &NoClock)
}

pub fn train_with_clock(
    corpus: &Corpus,
    dims: ModelDims,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(HarmoniumParams, TrainReport)> {
    config.check()?;
    if corpus.is_empty() {
        return Err(Error::Corpus("cannot train on an empty corpus".into()));
    }
    if corpus.words() != dims.words || corpus.bins() != dims.bins {
        return Err(Error::Shape(format!(
            "corpus is (M={}, K={}), model is (M={}, K={})",
            corpus.words(),
            corpus.bins(),
            dims.words,
            dims.bins
        )));
    }
    corpus.check()?;
    let (corpus, flagged) = if config.normalize_features {
        let n = normalize_features(corpus);
        (n.corpus, n.flagged)
    } else {
        (corpus.clone(), Vec::new())
    };
    let (mut params, svd_padded) = initial_params(&corpus, dims, config)?;
    let mut trainer = Ascent::new(&params, config);

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(config.seed, epoch as u64));
        let mut record = EpochRecord {
            epoch,
            grad_norm: 0.0,
            clamped_words: 0,
            gmf_divergences: 0,
            rate_overflows: 0,
            projections: 0,
            elapsed_secs: 0.0,
        };
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| corpus.observations[i].clone()));
            let grad = match &config.method {
                Method::Cd => {
                    let gibbs = GibbsConfig {
                        rng_seed: derive_seed(derive_seed(config.seed, epoch as u64), b as u64),
                        ..config.gibbs
                    };
                    match cd_gradient(&params, &batch, &gibbs) {
                        Ok(est) => {
                            record.clamped_words += est.clamped;
                            est.gradients
                        }
                        Err(Error::RateOverflow { .. }) => {
                            record.rate_overflows += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
                Method::Gmf => match gmf_gradient(&params, &batch, &config.gmf) {
                    Ok(g) => g,
                    Err(Error::Divergence { .. } | Error::RateOverflow { .. }) => {
                        record.gmf_divergences += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                },
                Method::Exact(trunc) => exact_gradient(&params, &batch, trunc)?,
            };
            if let Some((component, index)) = grad.first_non_finite() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    component,
                    index,
                });
            }
            record.grad_norm += grad.norm();
            batches += 1;
            trainer.step(&mut params, &grad, config);
            if project_integrable(&mut params, config.projection_margin) {
                record.projections += 1;
            }
        }
        if batches > 0 {
            record.grad_norm /= batches as f64;
        }
        record.elapsed_secs = clock.seconds();
        records.push(record);
    }
    Ok((
        params,
        TrainReport {
            epochs: records,
            flagged,
            svd_padded,
        },
    ))
}

/// Momentum state for gradient ascent in `(α, β, σ⁻¹, W, U)`.
struct Ascent {
    velocity: Gradients,
}

impl Ascent {
    fn new(params: &HarmoniumParams, _config: &TrainConfig) -> Self {
        Self {
            velocity: Gradients::zeros(params.dims),
        }
    }

    fn step(&mut self, params: &mut HarmoniumParams, grad: &Gradients, config: &TrainConfig) {
        let mut g = grad.clone();
        if config.freeze_couplings {
            g.d_w.scale(0.0);
            g.d_u.scale(0.0);
        } else if config.weight_decay > 0.0 {
            let decay = Gradients {
                d_alpha: vec![0.0; params.dims.words],
                d_beta: vec![0.0; params.dims.bins],
                d_inv_sigma: vec![0.0; params.dims.bins],
                d_w: params.w.clone(),
                d_u: params.u.clone(),
            };
            g.add_scaled(&decay, -config.weight_decay);
        }
        let v = &mut self.velocity;
        let mut scaled = Gradients::zeros(params.dims);
        scaled.add_scaled(v, config.momentum);
        scaled.add_scaled(&g, config.learning_rate);
        *v = scaled;

        for (a, d) in params.alpha.iter_mut().zip(&v.d_alpha) {
            *a += d;
        }
        for (b, d) in params.beta.iter_mut().zip(&v.d_beta) {
            *b += d;
        }
        for (s, d) in params.sigma.iter_mut().zip(&v.d_inv_sigma) {
            let inv = 1.0 / *s;
            let mut next = inv + d;
            if !(next > 0.0) {
                next = inv / 2.0;
            }
            *s = (1.0 / next).max(SIGMA_FLOOR);
        }
        for (w, d) in params.w.as_mut_slice().iter_mut().zip(v.d_w.as_slice()) {
            *w += d;
        }
        for (u, d) in params.u.as_mut_slice().iter_mut().zip(v.d_u.as_slice()) {
            *u += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};
    use crate::model::validate_params;

    #[test]
    fn defaults_follow_protocol() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 1000);
        assert_eq!(c.method, Method::Cd);
        assert!(c.normalize_features);
        assert_eq!(latent_dimension_sweep(5), vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
    }

    #[test]
    fn projection_restores_margin() {
        let mut p = HarmoniumParams::zeros(ModelDims::new(1, 2, 1).unwrap());
        p.u[(0, 0)] = 1.5;
        p.u[(1, 0)] = 0.5;
        assert!(!validate_params(&p).unwrap().is_ok());
        assert!(project_integrable(&mut p, 0.05));
        assert!(validate_params(&p).unwrap().is_ok());
        assert!((p.integrability_margin() - 0.05).abs() < 1e-12);
        assert!(!project_integrable(&mut p, 0.05));
    }

    #[test]
    fn svd_init_needs_enough_rows() {
        let spec = SyntheticSpec::disjoint_clusters(2, 6, 2, 1.0, 0.0, 0.1, 3, 1);
        let c = generate_synthetic(&spec).unwrap();
        assert!(svd_init(&c, 4, 0.01, 0).is_err());
    }

    #[test]
    fn batch_duplication_leaves_exact_gradient_unchanged() {
        let mut p = HarmoniumParams::zeros(ModelDims::new(2, 1, 1).unwrap());
        p.alpha = vec![0.2, -0.3];
        p.w[(0, 0)] = 0.1;
        p.u[(0, 0)] = 0.2;
        let t = TruncationSpec::uniform(5, 1, -5.0, 5.0, 21).unwrap();
        let batch = vec![
            Observation::from_dense(&[1, 0], &[0.3]),
            Observation::from_dense(&[2, 3], &[-1.0]),
        ];
        let doubled: Vec<Observation> = batch.iter().chain(batch.iter()).cloned().collect();
        let a = exact_gradient(&p, &batch, &t).unwrap().flatten();
        let b = exact_gradient(&p, &doubled, &t).unwrap().flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
