//! Architecture descriptions and shape validation.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::math;
use crate::tensor::Shape;

/// Pointwise nonlinearity applied after every hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => math::tanh(z),
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative at `z`; relu uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = math::tanh(z);
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Final linear map producing the scalar output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// `f = 1/sqrt(W H n) * sum_{r,s,i} V_{rs,i} a_{rs,i}`
    Flatten,
    /// `f = 1/(W H sqrt(n)) * sum_{r,s,i} V_i a_{rs,i}`
    Gap,
}

/// Weighted map used on the straight path of a skip layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inner {
    Conv { kw: usize, kh: usize },
    Dense,
}

fn default_pool() -> usize {
    2
}

/// One hidden layer. Every layer produces the next activation and is followed
/// by the network's activation function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 SAME-padded convolution with odd kernel `kw x kh` onto `n` channels.
    Conv { kw: usize, kh: usize },
    /// Fully connected map from the whole activation onto `n` channels at one position.
    Dense,
    /// `pre = inner(a_l) + a_target`, with `target` the index of an earlier
    /// activation (0 is the input).
    Skip { target: usize, inner: Inner },
    /// Global average over spatial positions.
    Gap,
    /// Max over `size x size` windows with the given stride.
    MaxPool {
        #[serde(default = "default_pool")]
        size: usize,
        #[serde(default = "default_pool")]
        stride: usize,
    },
}

impl LayerSpec {
    pub fn is_weighted(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. })
    }

    /// The weighted map of a conv/dense/skip layer.
    pub fn weighted_map(&self) -> Option<Inner> {
        match *self {
            LayerSpec::Conv { kw, kh } => Some(Inner::Conv { kw, kh }),
            LayerSpec::Dense => Some(Inner::Dense),
            LayerSpec::Skip { inner, .. } => Some(inner),
            _ => None,
        }
    }
}

/// Architecture of a scalar-output network in NTK parameterization.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    /// Channels per hidden layer.
    pub width: usize,
    pub activation: Activation,
    pub readout: Readout,
    pub layers: Vec<LayerSpec>,
}

/// Validated activation shapes: `shapes[0]` is the input, `shapes[l + 1]` the
/// output of layer `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapePlan {
    pub shapes: Vec<Shape>,
}

impl ShapePlan {
    pub fn output(&self) -> Shape {
        *self.shapes.last().expect("plan always holds the input shape")
    }
}

impl NetworkSpec {
    /// Same architecture at another width.
    pub fn with_width(&self, width: usize) -> Self {
        Self { width, ..self.clone() }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Identity activation and no max-pool: the network is linear in its
    /// input and admits a chain decomposition.
    pub fn is_linear_decomposable(&self) -> bool {
        self.activation == Activation::Identity
            && !self.layers.iter().any(|l| matches!(l, LayerSpec::MaxPool { .. }))
    }

    pub fn plan(&self) -> Result<ShapePlan, NnError> {
        if self.width == 0 {
            return Err(NnError::ZeroWidth);
        }
        if self.input_shape.is_empty() {
            return Err(NnError::EmptyInput);
        }
        let n = self.width;
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape);
        for (layer, spec) in self.layers.iter().enumerate() {
            let prev = shapes[layer];
            let next = match *spec {
                LayerSpec::Conv { kw, kh } => {
                    check_kernel(layer, kw, kh)?;
                    Shape::new(prev.height, prev.width, n)
                }
                LayerSpec::Dense => Shape::new(1, 1, n),
                LayerSpec::Skip { target, inner } => {
                    let straight = match inner {
                        Inner::Conv { kw, kh } => {
                            check_kernel(layer, kw, kh)?;
                            Shape::new(prev.height, prev.width, n)
                        }
                        Inner::Dense => Shape::new(1, 1, n),
                    };
                    if target > layer {
                        return Err(NnError::SkipTarget { layer, target });
                    }
                    if shapes[target] != straight {
                        return Err(NnError::SkipShapeMismatch {
                            layer,
                            target,
                            straight,
                            target_shape: shapes[target],
                        });
                    }
                    straight
                }
                LayerSpec::Gap => Shape::new(1, 1, prev.channels),
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 || size > prev.height || size > prev.width {
                        return Err(NnError::Unsupported {
                            layer,
                            reason: "max-pool window must be nonempty and fit inside the activation",
                        });
                    }
                    Shape::new(
                        (prev.height - size) / stride + 1,
                        (prev.width - size) / stride + 1,
                        prev.channels,
                    )
                }
            };
            shapes.push(next);
        }
        Ok(ShapePlan { shapes })
    }
}

fn check_kernel(layer: usize, kw: usize, kh: usize) -> Result<(), NnError> {
    if kw % 2 == 0 || kh % 2 == 0 {
        return Err(NnError::EvenKernel { layer, kw, kh });
    }
    Ok(())
}
