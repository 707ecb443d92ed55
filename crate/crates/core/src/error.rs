use alloc::string::String;
use alloc::vec::Vec;

use crate::model::Violation;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameters: {0:?}")]
    InvalidParams(Vec<Violation>),
    #[error("word-rate exponent {exponent} for word {word} exceeds cap {cap}")]
    RateOverflow { word: usize, exponent: f64, cap: f64 },
    #[error("truncated state space has {states} states, budget is {budget}")]
    BudgetExceeded { states: f64, budget: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("mean-field iteration diverged after {iterations} sweeps (residual {residual})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("non-finite gradient at epoch {epoch}: {component}[{index}]")]
    NonFiniteGradient {
        epoch: usize,
        component: &'static str,
        index: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("zero query vector")]
    ZeroQuery,
    #[error("empty relevant set")]
    EmptyRelevant,
    #[error("test label {0:?} has no training examples")]
    UnseenLabel(String),
    #[error("invalid corpus: {0}")]
    Corpus(String),
}
