//! Blocked Gibbs sampling over the bipartite field and the contrastive
//! divergence gradient.

use alloc::vec::Vec;

use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::grad::{Gradients, Moments};
use crate::model::{
    hidden_mean_unchecked, image_conditional, word_rates, HarmoniumParams, HiddenState,
    Observation, SparseCounts,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    /// Full sweeps per reconstruction (the k of CD-k).
    pub steps: usize,
    /// Sampled word counts are clamped at this value.
    pub x_max: u32,
    pub rng_seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            steps: 1,
            x_max: 100,
            rng_seed: 0,
        }
    }
}

impl GibbsConfig {
    fn check(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("Gibbs steps must be at least 1".into()));
        }
        if self.x_max < 1 {
            return Err(Error::Config("x_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws `h ~ N(Wᵀx + Uᵀz, I)`.
pub fn sample_hidden<R: rand::Rng + ?Sized>(
    params: &HarmoniumParams,
    obs: &Observation,
    rng: &mut R,
) -> Result<HiddenState> {
    params.check_observation(obs)?;
    let mut h = hidden_mean_unchecked(params, obs);
    for v in h.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *v += e;
    }
    Ok(h)
}

/// Poisson word counts given `h`. Draws above `x_max` are clamped; the
/// second value is the number of clamped words.
pub fn sample_words<R: rand::Rng + ?Sized>(
    params: &HarmoniumParams,
    h: &[f64],
    rng: &mut R,
    x_max: u32,
) -> Result<(SparseCounts, usize)> {
    let rates = word_rates(params, h)?;
    let mut clamped = 0;
    let mut pairs = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        let draw = poisson_draw(rate, rng);
        if draw > x_max as f64 {
            clamped += 1;
            pairs.push((i, x_max));
        } else if draw > 0.0 {
            pairs.push((i, draw as u32));
        }
    }
    Ok((SparseCounts::from_pairs(rates.len(), pairs)?, clamped))
}

fn poisson_draw<R: rand::Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // Below ~1e-300 the draw is zero with probability indistinguishable from 1.
    if rate < 1e-300 {
        let _: f64 = rng.random();
        return 0.0;
    }
    match Poisson::new(rate) {
        Ok(p) => p.sample(rng),
        Err(_) => f64::INFINITY,
    }
}

/// Gaussian bins given `h`.
pub fn sample_image<R: rand::Rng + ?Sized>(
    params: &HarmoniumParams,
    h: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mean, var) = image_conditional(params, h)?;
    Ok(mean
        .iter()
        .zip(&var)
        .map(|(m, v)| {
            let e: f64 = StandardNormal.sample(rng);
            m + crate::math::sqrt(*v) * e
        })
        .collect())
}

/// Result of a Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOutcome {
    pub obs: Observation,
    /// The last sampled `h`, kept for diagnostics.
    pub last_hidden: HiddenState,
    pub clamped: usize,
}

/// Runs `config.steps` sweeps of `h | (x, z)` then `(x, z) | h`, starting at
/// `obs_in`.
pub fn gibbs_sweep<R: rand::Rng + ?Sized>(
    params: &HarmoniumParams,
    obs_in: &Observation,
    config: &GibbsConfig,
    rng: &mut R,
) -> Result<GibbsOutcome> {
    config.check()?;
    params.check_observation(obs_in)?;
    let mut obs = obs_in.clone();
    let mut last_hidden = Vec::new();
    let mut clamped = 0;
    for _ in 0..config.steps {
        let h = sample_hidden(params, &obs, rng)?;
        let (x, c) = sample_words(params, &h, rng, config.x_max)?;
        let z = sample_image(params, &h, rng)?;
        clamped += c;
        obs = Observation { x, z };
        last_hidden = h;
    }
    Ok(GibbsOutcome {
        obs,
        last_hidden,
        clamped,
    })
}

/// Contrastive-divergence gradient with clamp accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct CdEstimate {
    pub gradients: Gradients,
    /// Word draws clamped at `x_max` across all chains and sweeps.
    pub clamped: usize,
    /// Total word draws.
    pub draws: usize,
}

impl CdEstimate {
    pub fn clamp_fraction(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.clamped as f64 / self.draws as f64
        }
    }
}

/// CD-k gradient on `batch`.
///
/// Chain `n` starts at `batch[n]` and uses its own random stream derived from
/// `(config.rng_seed, n)`, so the result does not depend on how chains are
/// scheduled. Coupling statistics use the deterministic `h' = Wᵀx + Uᵀz` of
/// each data point and each reconstruction rather than the sampled `h`.
pub fn cd_gradient(
    params: &HarmoniumParams,
    batch: &[Observation],
    config: &GibbsConfig,
) -> Result<CdEstimate> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    config.check()?;
    for obs in batch {
        params.check_observation(obs)?;
    }

    let chain = |n: usize| -> Result<GibbsOutcome> {
        let mut r: Rng = rng::stream(config.rng_seed, n as u64);
        gibbs_sweep(params, &batch[n], config, &mut r)
    };

    #[cfg(feature = "parallel")]
    let recon: Vec<Result<GibbsOutcome>> = {
        use rayon::prelude::*;
        (0..batch.len()).into_par_iter().map(chain).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let recon: Vec<Result<GibbsOutcome>> = (0..batch.len()).map(chain).collect();

    let weight = 1.0 / batch.len() as f64;
    let mut model = Moments::zeros(params.dims);
    let mut clamped = 0;
    for outcome in recon {
        let outcome = outcome?;
        clamped += outcome.clamped;
        model.accumulate(params, &outcome.obs, weight);
    }
    let data = Moments::of_batch(params, batch);
    Ok(CdEstimate {
        gradients: Moments::gradient(&data, &model),
        clamped,
        draws: batch.len() * config.steps * params.dims.words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn decoupled(alpha: &[f64]) -> HarmoniumParams {
        let mut p = HarmoniumParams::zeros(ModelDims::new(alpha.len(), 2, 2).unwrap());
        p.alpha = alpha.to_vec();
        p
    }

    #[test]
    fn zero_coupling_hidden_is_standard_normal() {
        let p = decoupled(&[0.0]);
        let obs = Observation::from_dense(&[3], &[1.0, -2.0]);
        let mut r = rng::from_seed(7);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let h = sample_hidden(&p, &obs, &mut r).unwrap();
            sum[0] += h[0];
            sum[1] += h[1];
        }
        for s in sum {
            assert!((s / n as f64).abs() < 0.02);
        }
    }

    #[test]
    fn degenerate_rate_gives_zero_counts() {
        let p = decoupled(&[-800.0, -50.0]);
        let mut r = rng::from_seed(1);
        for _ in 0..1000 {
            let (x, c) = sample_words(&p, &[0.0, 0.0], &mut r, 10).unwrap();
            assert_eq!(x.total(), 0);
            assert_eq!(c, 0);
        }
    }

    #[test]
    fn clamping_is_counted() {
        let p = decoupled(&[5.0]);
        let mut r = rng::from_seed(3);
        let (x, c) = sample_words(&p, &[0.0, 0.0], &mut r, 4).unwrap();
        assert_eq!(x.get(0), 4);
        assert_eq!(c, 1);
    }

    #[test]
    fn small_sigma_concentrates_image() {
        let mut p = decoupled(&[0.0]);
        p.sigma = alloc::vec![1e-4, 1e-4];
        let mut r = rng::from_seed(5);
        for _ in 0..100 {
            let z = sample_image(&p, &[0.3, -1.0], &mut r).unwrap();
            assert!(z.iter().all(|v| v.abs() < 1e-3));
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let p = decoupled(&[0.0]);
        let obs = Observation::from_dense(&[0], &[0.0, 0.0]);
        let cfg = GibbsConfig {
            steps: 0,
            ..GibbsConfig::default()
        };
        assert!(gibbs_sweep(&p, &obs, &cfg, &mut rng::from_seed(0)).is_err());
        assert_eq!(cd_gradient(&p, &[], &GibbsConfig::default()), Err(Error::EmptyBatch));
    }

    #[test]
    fn sweeps_are_seed_deterministic() {
        let mut p = decoupled(&[0.2, -0.4]);
        p.w[(0, 1)] = 0.3;
        p.u[(1, 0)] = -0.2;
        let obs = Observation::from_dense(&[1, 2], &[0.5, -0.5]);
        let cfg = GibbsConfig {
            steps: 5,
            ..GibbsConfig::default()
        };
        let a = gibbs_sweep(&p, &obs, &cfg, &mut rng::from_seed(11)).unwrap();
        let b = gibbs_sweep(&p, &obs, &cfg, &mut rng::from_seed(11)).unwrap();
        assert_eq!(a, b);
    }
}
