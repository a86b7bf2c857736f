//! NTK-parameterized networks: construction, evaluation, exact gradients and
//! empirical neural tangent kernels.

mod kernel;
mod ntk;
mod ohl;
mod ops;
mod pass;
mod spec;
mod state;

use thiserror::Error;

use crate::tensor::Shape;

pub use kernel::KernelMatrix;
pub use ntk::{ntk_gram, ntk_matrix, ntk_from_sensitivities};
pub use ohl::analytic_ohl_ntk;
pub use pass::{backward, forward, forward_one, gradient, loss_gradient, sensitivity, trace, Sensitivity, Trace};
pub use spec::{Activation, Inner, LayerSpec, NetworkSpec, Readout, ShapePlan};
pub use state::{build_network, LayerParams, NetworkState, ParamLayout};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("network width must be positive")]
    ZeroWidth,
    #[error("input shape has no entries")]
    EmptyInput,
    #[error("layer {layer}: kernel {kw}x{kh} must have odd sides")]
    EvenKernel { layer: usize, kw: usize, kh: usize },
    #[error("layer {layer}: skip target {target} is not an earlier activation")]
    SkipTarget { layer: usize, target: usize },
    #[error(
        "layer {layer}: skip from activation {target} has shape {target_shape:?} but the straight path produces {straight:?}"
    )]
    SkipShapeMismatch { layer: usize, target: usize, straight: Shape, target_shape: Shape },
    #[error("layer {layer}: {reason}")]
    Unsupported { layer: usize, reason: &'static str },
    #[error("input shape {found:?} does not match the network input {expected:?}")]
    InputShape { expected: Shape, found: Shape },
    #[error("expected {expected} values, found {found}")]
    DataLength { expected: usize, found: usize },
    #[error("wrong architecture: {0}")]
    WrongArchitecture(&'static str),
}
