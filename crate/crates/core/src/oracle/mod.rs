//! Exact ground truth for deep-linear networks and a seeded Monte Carlo
//! estimator for correlation functions.

mod chains;
mod mc;
mod moments;

use alloc::string::String;
use thiserror::Error;

use crate::nn::NnError;

pub use chains::{chain_count, decompose, evaluate_chain, evaluate_sum, Chain, ChainDecomposition, ReadoutBranch, Step, WeightRef};
pub use mc::{mc_oracle, mc_oracle_range, mc_sample, sample_seed, McAccumulator, McEstimate, McPlan};
pub use moments::{forward_moments, wick_ntk, wick_pair};

pub const DEFAULT_CHAIN_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("network is not linear-decomposable: {0}")]
    Nonlinear(&'static str),
    #[error("decomposition has {count} chains, above the cap of {cap}")]
    TooManyChains { count: u128, cap: u128 },
    #[error("state was built for a different architecture")]
    StateMismatch,
    #[error("factor {factor} carries {slots} derivative slots; only f and df factors can be sampled")]
    Unrealizable { factor: usize, slots: usize },
    #[error("no input named `{0}`")]
    MissingInput(String),
    #[error(transparent)]
    Network(#[from] NnError),
}
