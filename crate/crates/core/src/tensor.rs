//! Dense `(height, width, channels)` images stored row-major, channel last.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::nn::NnError;

/// Spatial extent and channel count of an activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    /// Number of spatial positions `H * W`.
    pub const fn positions(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }
}

/// One input example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != shape.len() {
            return Err(NnError::DataLength { expected: shape.len(), found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: alloc::vec![0.0; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same image with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|v| v * factor).collect() }
    }
}
