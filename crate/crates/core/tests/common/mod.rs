#![allow(dead_code)]

use dwh_core::model::{HarmoniumParams, ModelDims, Observation, TruncationSpec};
use dwh_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type TestRng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

/// M=2, K=1, J=2 with moderate random parameters.
pub fn tiny_params(seed: u64) -> HarmoniumParams {
    let mut r = rng(seed);
    let dims = ModelDims::new(2, 1, 2).unwrap();
    let mut u = |lo: f64, hi: f64| r.random_range(lo..hi);
    let alpha = vec![u(-1.5, -0.2), u(-1.5, -0.2)];
    let beta = vec![u(-0.5, 0.5)];
    let sigma = vec![u(0.6, 1.0)];
    let w = Matrix::from_row_major(2, 2, (0..4).map(|_| u(-0.15, 0.15)).collect());
    let uu = Matrix::from_row_major(1, 2, (0..2).map(|_| u(-0.3, 0.3)).collect());
    HarmoniumParams::new(dims, alpha, beta, sigma, w, uu).unwrap()
}

pub fn tiny_trunc() -> TruncationSpec {
    TruncationSpec::uniform(8, 1, -6.0, 6.0, 41).unwrap()
}

/// Observations with counts in 0..=4 and z in [-2, 2].
pub fn random_batch(dims: ModelDims, n: usize, seed: u64) -> Vec<Observation> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let x: Vec<u32> = (0..dims.words).map(|_| r.random_range(0..=4)).collect();
            let z: Vec<f64> = (0..dims.bins).map(|_| r.random_range(-2.0..2.0)).collect();
            Observation::from_dense(&x, &z)
        })
        .collect()
}

pub fn normal(r: &mut TestRng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, r)
}
