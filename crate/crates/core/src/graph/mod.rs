//! Correlation functions, cluster graphs, Feynman diagrams and exact width
//! exponents.

mod cluster;
mod corr;
mod exponent;
mod feynman;

use alloc::string::String;
use thiserror::Error;

pub use cluster::{cluster_graph, conjecture_exponent, ClusterGraph, Component};
pub use corr::{
    dtheta_dt_spec, ntk_spec, ntk_squared_spec, pair_spec, CorrelationSpec, Factor, FactorDoc, SlotRef, SpecDocument,
};
pub use exponent::HalfInt;
pub use feynman::{
    chain_types, component_bound, deep_linear_exponent, diagram_exponent, double_line, enumerate_diagrams,
    euler_characteristic, exponent_report, matching_count, perfect_matchings, single_line_components, DeepLinear,
    DoubleLineGraph, EdgeType, Enumeration, ExponentReport, FeynmanDiagram, Vanishing, DEFAULT_DIAGRAM_CAP,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("correlation function has an odd number of factors ({m})")]
    OddFactorCount { m: usize },
    #[error("slot `{label}` appears on factor {first_factor} and again on factor {second_factor}")]
    DuplicateLabel { label: String, first_factor: usize, second_factor: usize },
    #[error("pair {pair} names unknown slot `{label}`")]
    UnknownSlot { label: String, pair: usize },
    #[error("slot `{label}` is paired by pair {first_pair} and again by pair {second_pair}")]
    SlotPairedTwice { label: String, first_pair: usize, second_pair: usize },
    #[error("slot `{label}` on factor {factor} is not paired")]
    UnpairedSlot { label: String, factor: usize },
    #[error("expected {expected} depths, found {found}")]
    DepthCount { expected: usize, found: usize },
    #[error("factor {factor} has depth 0")]
    ZeroDepth { factor: usize },
    #[error("{count} candidate diagrams exceed the budget of {cap}")]
    Budget { count: u128, cap: u128 },
    #[error("internal inconsistency: {0}")]
    Internal(String),
}
