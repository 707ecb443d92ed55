//! Gradient container and the sufficient statistics it is built from.
//!
//! Every estimator (contrastive divergence, mean field, exact enumeration)
//! produces a model-side [`Moments`] and subtracts it from the data-side one.
//! The `σ⁻¹` component has the opposite orientation from the other four: the
//! log-marginal contains `−½ z²σ⁻²`, so its derivative with respect to `σ⁻¹`
//! is `−z²σ⁻¹` and the ascent direction is `⟨z²σ⁻¹⟩_model − ⟨z²σ⁻¹⟩_data`.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math::{dot, sqrt};
use crate::model::{hidden_mean_unchecked, HarmoniumParams, ModelDims, Observation};

/// Log-likelihood gradient with respect to `α`, `β`, `σ⁻¹`, `W`, `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_alpha: Vec<f64>,
    pub d_beta: Vec<f64>,
    pub d_inv_sigma: Vec<f64>,
    pub d_w: Matrix,
    pub d_u: Matrix,
}

impl Gradients {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            d_alpha: vec![0.0; dims.words],
            d_beta: vec![0.0; dims.bins],
            d_inv_sigma: vec![0.0; dims.bins],
            d_w: Matrix::zeros(dims.words, dims.aspects),
            d_u: Matrix::zeros(dims.bins, dims.aspects),
        }
    }

    /// Components in a fixed order: α, β, σ⁻¹, W (row-major), U (row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(&self.d_alpha);
        v.extend_from_slice(&self.d_beta);
        v.extend_from_slice(&self.d_inv_sigma);
        v.extend_from_slice(self.d_w.as_slice());
        v.extend_from_slice(self.d_u.as_slice());
        v
    }

    pub fn norm(&self) -> f64 {
        let f = self.flatten();
        sqrt(dot(&f, &f))
    }

    pub fn cosine(&self, other: &Gradients) -> f64 {
        let (a, b) = (self.flatten(), other.flatten());
        dot(&a, &b) / (sqrt(dot(&a, &a)) * sqrt(dot(&b, &b)))
    }

    /// First non-finite component, as `(name, flat index within it)`.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        let parts: [(&'static str, &[f64]); 5] = [
            ("d_alpha", &self.d_alpha),
            ("d_beta", &self.d_beta),
            ("d_inv_sigma", &self.d_inv_sigma),
            ("d_W", self.d_w.as_slice()),
            ("d_U", self.d_u.as_slice()),
        ];
        parts
            .into_iter()
            .find_map(|(name, v)| v.iter().position(|x| !x.is_finite()).map(|i| (name, i)))
    }

    pub(crate) fn add_scaled(&mut self, other: &Gradients, s: f64) {
        let pairs = [
            (&mut self.d_alpha[..], &other.d_alpha[..]),
            (&mut self.d_beta[..], &other.d_beta[..]),
            (&mut self.d_inv_sigma[..], &other.d_inv_sigma[..]),
            (self.d_w.as_mut_slice(), other.d_w.as_slice()),
            (self.d_u.as_mut_slice(), other.d_u.as_slice()),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }
}

/// Expectations `⟨x⟩`, `⟨z⟩`, `⟨z²σ⁻¹⟩`, `⟨x h'ᵀ⟩`, `⟨z h'ᵀ⟩` with
/// `h' = Wᵀx + Uᵀz`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Moments {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub z_sq_inv_sigma: Vec<f64>,
    pub xh: Matrix,
    pub zh: Matrix,
}

impl Moments {
    pub fn zeros(dims: ModelDims) -> Self {
        let g = Gradients::zeros(dims);
        Self {
            x: g.d_alpha,
            z: g.d_beta,
            z_sq_inv_sigma: g.d_inv_sigma,
            xh: g.d_w,
            zh: g.d_u,
        }
    }

    /// Adds `weight ×` the statistics of one observation.
    pub fn accumulate(&mut self, params: &HarmoniumParams, obs: &Observation, weight: f64) {
        let h = hidden_mean_unchecked(params, obs);
        self.accumulate_dense(params, &obs.x.to_dense_f64_sparse(), &obs.z, &h, weight);
    }

    /// Adds `weight ×` the statistics of `(x, z)` given as sparse counts and
    /// the precomputed `h'`.
    pub fn accumulate_dense(
        &mut self,
        params: &HarmoniumParams,
        x: &[(usize, f64)],
        z: &[f64],
        h: &[f64],
        weight: f64,
    ) {
        for &(i, c) in x {
            let wc = weight * c;
            self.x[i] += wc;
            for (o, hj) in self.xh.row_mut(i).iter_mut().zip(h) {
                *o += wc * hj;
            }
        }
        for k in 0..z.len() {
            let wz = weight * z[k];
            self.z[k] += wz;
            self.z_sq_inv_sigma[k] += wz * z[k] / params.sigma[k];
            for (o, hj) in self.zh.row_mut(k).iter_mut().zip(h) {
                *o += wz * hj;
            }
        }
    }

    /// Exact batch-averaged data statistics.
    pub fn of_batch(params: &HarmoniumParams, batch: &[Observation]) -> Self {
        let mut m = Self::zeros(params.dims);
        let w = 1.0 / batch.len() as f64;
        for obs in batch {
            m.accumulate(params, obs, w);
        }
        m
    }

    /// `data − model`, except `σ⁻¹` which is `model − data`.
    pub fn gradient(data: &Moments, model: &Moments) -> Gradients {
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let mat = |a: &Matrix, b: &Matrix| {
            Matrix::from_row_major(a.rows(), a.cols(), diff(a.as_slice(), b.as_slice()))
        };
        Gradients {
            d_alpha: diff(&data.x, &model.x),
            d_beta: diff(&data.z, &model.z),
            d_inv_sigma: diff(&model.z_sq_inv_sigma, &data.z_sq_inv_sigma),
            d_w: mat(&data.xh, &model.xh),
            d_u: mat(&data.zh, &model.zh),
        }
    }
}

impl crate::model::SparseCounts {
    pub(crate) fn to_dense_f64_sparse(&self) -> Vec<(usize, f64)> {
        self.nonzeros().iter().map(|&(i, c)| (i, c as f64)).collect()
    }
}
