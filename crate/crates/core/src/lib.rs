//! Dual-wing harmonium random fields.
//!
//! A dual-wing harmonium couples Poisson word counts `x` (the text wing) and
//! Gaussian histogram bins `z` (the image wing) to a layer of unit-variance
//! Gaussian latent aspects `h` through an undirected bipartite field. This
//! crate holds the numerical core: exact conditionals and densities, blocked
//! Gibbs sampling with contrastive divergence, mean-field fixed points,
//! training, and the retrieval / annotation evaluation toolkit.
//!
//! The crate is `no_std` (with `alloc`) when built without the `std`
//! feature. The `parallel` feature spreads per-observation work over rayon.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod gmf;
pub mod grad;
pub mod linalg;
pub mod math;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod train;

pub use corpus::{generate_synthetic, normalize_features, ClusterProfile, Corpus, SyntheticSpec};
pub use error::{Error, Result};
pub use gibbs::{cd_gradient, gibbs_sweep, sample_hidden, sample_image, sample_words, GibbsConfig};
pub use gmf::{annotate, gmf_fixed_point, gmf_gradient, Clamp, GmfConfig, GmfState};
pub use grad::Gradients;
pub use linalg::Matrix;
pub use model::{
    validate_params, HarmoniumParams, HiddenState, ModelDims, Observation, SparseCounts,
    TruncationSpec, Validity, Violation,
};
pub use train::{exact_gradient, svd_init, train, Method, TrainConfig, TrainReport};
