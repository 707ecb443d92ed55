//! Observation collections, feature-sum normalization and the synthetic
//! cluster generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Observation, SparseCounts};
use crate::rng;

/// Observations plus vocabulary, bin labels, identifiers and optional
/// category labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub observations: Vec<Observation>,
    pub vocab: Vec<String>,
    pub bin_labels: Vec<String>,
    pub labels: Option<Vec<String>>,
    pub ids: Vec<String>,
}

impl Corpus {
    pub fn new(
        observations: Vec<Observation>,
        vocab: Vec<String>,
        bin_labels: Vec<String>,
        labels: Option<Vec<String>>,
        ids: Vec<String>,
    ) -> Result<Self> {
        let c = Self {
            observations,
            vocab,
            bin_labels,
            labels,
            ids,
        };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.observations.len();
        if self.ids.len() != n {
            return Err(Error::Corpus(format!("{} ids for {n} observations", self.ids.len())));
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::Corpus(format!("{} labels for {n} observations", l.len())));
            }
        }
        let mut seen = BTreeSet::new();
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Corpus(format!("duplicate id {id:?}")));
            }
        }
        for (n, obs) in self.observations.iter().enumerate() {
            if obs.x.len() != self.vocab.len() || obs.z.len() != self.bin_labels.len() {
                return Err(Error::Corpus(format!(
                    "observation {:?} has shape ({}, {}), corpus is ({}, {})",
                    self.ids[n],
                    obs.x.len(),
                    obs.z.len(),
                    self.vocab.len(),
                    self.bin_labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn words(&self) -> usize {
        self.vocab.len()
    }

    pub fn bins(&self) -> usize {
        self.bin_labels.len()
    }

    /// Sub-corpus with the given observation indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            vocab: self.vocab.clone(),
            bin_labels: self.bin_labels.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// The `N × (M + K)` matrix `[X | Z]`.
    pub fn design_matrix(&self) -> Matrix {
        let (m, k) = (self.words(), self.bins());
        let mut a = Matrix::zeros(self.len(), m + k);
        for (n, obs) in self.observations.iter().enumerate() {
            let row = a.row_mut(n);
            for &(i, c) in obs.x.nonzeros() {
                row[i] = c as f64;
            }
            row[m..].copy_from_slice(&obs.z);
        }
        a
    }
}

/// Result of [`normalize_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub corpus: Corpus,
    /// Indices of observations left unscaled: zero image mass with nonzero
    /// text mass, or zero text mass with nonzero image mass.
    pub flagged: Vec<usize>,
}

/// Rescales each observation's `z` so that `Σ z = Σ x`.
pub fn normalize_features(corpus: &Corpus) -> Normalized {
    let mut out = corpus.clone();
    let mut flagged = Vec::new();
    for (n, obs) in out.observations.iter_mut().enumerate() {
        let text = obs.x.total() as f64;
        let image: f64 = obs.z.iter().sum();
        if text == image {
            continue;
        }
        if text == 0.0 || image == 0.0 {
            flagged.push(n);
            continue;
        }
        let f = text / image;
        obs.z.iter_mut().for_each(|v| *v *= f);
    }
    Normalized {
        corpus: out,
        flagged,
    }
}

/// One synthetic cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    /// Poisson rate per word, length M.
    pub word_rates: Vec<f64>,
    /// Mean image vector, length K.
    pub image_mean: Vec<f64>,
    pub weight: f64,
}

/// Directed cluster generator: pick a cluster, then `x_i ~ Poisson(rate_i)`
/// and `z ~ N(mean, noise² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub clusters: Vec<ClusterProfile>,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `clusters` equal-weight clusters over `words` words and `bins` bins.
    /// Cluster `c` owns a contiguous block of words (rate `rate`, zero
    /// elsewhere) and a contiguous block of bins (mean `image_level + 1`,
    /// `image_level` elsewhere).
    #[allow(clippy::too_many_arguments)]
    pub fn disjoint_clusters(
        clusters: usize,
        words: usize,
        bins: usize,
        rate: f64,
        image_level: f64,
        noise: f64,
        n: usize,
        seed: u64,
    ) -> Self {
        let profiles = (0..clusters)
            .map(|c| {
                let word_block = words / clusters;
                let bin_block = (bins / clusters).max(1);
                ClusterProfile {
                    word_rates: (0..words)
                        .map(|i| if i / word_block.max(1) == c { rate } else { 0.0 })
                        .collect(),
                    image_mean: (0..bins)
                        .map(|k| {
                            if k / bin_block == c {
                                image_level + 1.0
                            } else {
                                image_level
                            }
                        })
                        .collect(),
                    weight: 1.0 / clusters as f64,
                }
            })
            .collect();
        Self {
            clusters: profiles,
            n,
            noise,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        let first = self
            .clusters
            .first()
            .ok_or_else(|| Error::Config("synthetic spec needs at least one cluster".into()))?;
        let (m, k) = (first.word_rates.len(), first.image_mean.len());
        let mut total = 0.0;
        for (c, p) in self.clusters.iter().enumerate() {
            if p.word_rates.len() != m || p.image_mean.len() != k {
                return Err(Error::Config(format!("cluster {c} has inconsistent profile lengths")));
            }
            if p.word_rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return Err(Error::Config(format!("cluster {c} has a negative or non-finite rate")));
            }
            if !(p.weight > 0.0) {
                return Err(Error::Config(format!("cluster {c} has non-positive weight")));
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("cluster weights sum to {total}, not 1")));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generates a labelled corpus from `spec`. Labels are `c0`, `c1`, ...; ids
/// are `s000000`, ...; words `w0`, ...; bins `b0`, ....
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.check()?;
    let m = spec.clusters[0].word_rates.len();
    let k = spec.clusters[0].image_mean.len();
    let mut r = rng::from_seed(spec.seed);
    let pick = WeightedIndex::new(spec.clusters.iter().map(|c| c.weight))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut observations = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c = pick.sample(&mut r);
        let profile = &spec.clusters[c];
        let mut pairs = Vec::new();
        for (i, &rate) in profile.word_rates.iter().enumerate() {
            if rate > 0.0 {
                let draw: f64 = Poisson::new(rate)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .sample(&mut r);
                pairs.push((i, draw as u32));
            }
        }
        let mut z = Vec::with_capacity(k);
        for &mean in &profile.image_mean {
            let v = if spec.noise > 0.0 {
                Normal::new(mean, spec.noise)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .sample(&mut r)
            } else {
                mean
            };
            z.push(v);
        }
        observations.push(Observation {
            x: SparseCounts::from_pairs(m, pairs)?,
            z,
        });
        labels.push(format!("c{c}"));
    }
    Corpus::new(
        observations,
        (0..m).map(|i| format!("w{i}")).collect(),
        (0..k).map(|i| format!("b{i}")).collect(),
        Some(labels),
        (0..spec.n).map(|i| format!("s{i:06}")).collect(),
    )
}
