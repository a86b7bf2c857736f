//! Width-scaling laboratory for wide convolutional networks.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure computation:
//!
//! - [`nn`]: NTK-parameterized conv/dense/skip/GAP/max-pool networks, exact
//!   reverse-mode gradients and empirical NTK matrices.
//! - [`graph`]: correlation-function specs, cluster graphs, Feynman diagram
//!   enumeration, double-line graphs and exact width exponents.
//! - [`oracle`]: exact deep-linear ground truth (chain decomposition and
//!   second-moment propagation) plus a seeded Monte Carlo estimator.
//! - [`fit`]: scaling series and log-log power-law fits.
//! - [`train`]: full-batch gradient descent, linearized (frozen-kernel)
//!   evolution and late-time instability detection.
//! - [`observe`]: per-seed observables used by the width sweeps.
//!
//! File formats, dataset loaders, parallel sweeps and the command line live
//! in the `wideconv` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod fit;
pub mod graph;
pub(crate) mod math;
pub mod nn;
pub mod observe;
pub mod oracle;
pub mod tensor;
pub mod train;

pub use nn::{Activation, KernelMatrix, LayerSpec, NetworkSpec, NetworkState, NnError, Readout};
pub use tensor::{Image, Shape};
