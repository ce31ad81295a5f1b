//! Grid-valued containers shared by every stage of the pipeline.
//!
//! Pixels are addressed as `[i1, i2]` with `i1` running along axis 1 (rows,
//! `n1` of them) and `i2` along axis 2 (columns, `n2` of them). Storage is
//! row-major through `ndarray`.

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{invalid, Result, SegError};

/// A real scalar field on an `n1 x n2` grid with uniform spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    values: Array2<f64>,
    spacing: f64,
}

impl Image {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_spacing(values, 1.0)
    }

    pub fn with_spacing(values: Array2<f64>, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid(
                "spacing",
                format!("must be positive, got {spacing}"),
            ));
        }
        if values.is_empty() {
            return Err(invalid("values", "image has no pixels"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "image contains non-finite values"));
        }
        Ok(Self { values, spacing })
    }

    pub fn from_fn(n1: usize, n2: usize, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n1, n2), f))
    }

    pub fn constant(n1: usize, n2: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((n1, n2), value))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `(n1, n2)`.
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The pair `(∇1 u, ∇2 u)` of forward differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
    pub spacing: f64,
}

impl GradientField {
    pub fn zeros(n1: usize, n2: usize, spacing: f64) -> Self {
        Self {
            g1: Array2::zeros((n1, n2)),
            g2: Array2::zeros((n1, n2)),
            spacing,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.g1.dim()
    }
}

/// K channels of equal-sized images, stored as a `(K, n1, n2)` array.
///
/// Used for lifted features, segmentation masks, and the `2K`-channel data
/// fit values `(m(u_k), m(1 - u_k))`, which are interleaved as channels
/// `2k` and `2k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    data: Array3<f64>,
    spacing: f64,
}

/// Lifted feature channels `φ_1 … φ_K`.
pub type FeatureStack = ChannelStack;
/// Segmentation masks `u_1 … u_K`.
pub type MaskStack = ChannelStack;
/// The data-fit operator output, `2K` channels.
pub type DataFitValue = ChannelStack;

impl ChannelStack {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        Self::with_spacing(data, 1.0)
    }

    pub fn with_spacing(data: Array3<f64>, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid(
                "spacing",
                format!("must be positive, got {spacing}"),
            ));
        }
        if data.is_empty() {
            return Err(invalid("channels", "stack has no channels or no pixels"));
        }
        Ok(Self { data, spacing })
    }

    pub fn from_images(images: &[Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| invalid("channels", "stack needs at least one channel"))?;
        let (n1, n2) = first.dims();
        let mut data = Array3::zeros((images.len(), n1, n2));
        for (k, img) in images.iter().enumerate() {
            if img.dims() != (n1, n2) {
                return Err(SegError::DimensionMismatch {
                    expected: vec![n1, n2],
                    actual: vec![img.dims().0, img.dims().1],
                });
            }
            data.index_axis_mut(Axis(0), k).assign(img.values());
        }
        Self::with_spacing(data, first.spacing())
    }

    pub fn zeros(channels: usize, n1: usize, n2: usize, spacing: f64) -> Self {
        Self {
            data: Array3::zeros((channels, n1, n2)),
            spacing,
        }
    }

    pub fn filled(channels: usize, n1: usize, n2: usize, spacing: f64, value: f64) -> Self {
        Self {
            data: Array3::from_elem((channels, n1, n2), value),
            spacing,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    /// `(n1, n2)`.
    pub fn dims(&self) -> (usize, usize) {
        let (_, n1, n2) = self.data.dim();
        (n1, n2)
    }

    pub fn pixels(&self) -> usize {
        let (n1, n2) = self.dims();
        n1 * n2
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn channel(&self, k: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), k)
    }

    pub fn channel_mut(&mut self, k: usize) -> ArrayViewMut2<'_, f64> {
        self.data.index_axis_mut(Axis(0), k)
    }

    pub fn image(&self, k: usize) -> Image {
        Image {
            values: self.channel(k).to_owned(),
            spacing: self.spacing,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &ChannelStack) -> Result<()> {
        if self.data.dim() != other.data.dim() {
            return Err(SegError::DimensionMismatch {
                expected: self.data.shape().to_vec(),
                actual: other.data.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &ChannelStack) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Gradient duals: one 2-vector per pixel and channel, shape `(K, 2, n1, n2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack {
    data: Array4<f64>,
}

impl GradientStack {
    pub fn zeros(channels: usize, n1: usize, n2: usize) -> Self {
        Self {
            data: Array4::zeros((channels, 2, n1, n2)),
        }
    }

    pub fn from_array(data: Array4<f64>) -> Result<Self> {
        if data.len_of(Axis(1)) != 2 {
            return Err(SegError::DimensionMismatch {
                expected: vec![
                    data.len_of(Axis(0)),
                    2,
                    data.len_of(Axis(2)),
                    data.len_of(Axis(3)),
                ],
                actual: data.shape().to_vec(),
            });
        }
        Ok(Self { data })
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn dims(&self) -> (usize, usize) {
        let (_, _, n1, n2) = self.data.dim();
        (n1, n2)
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn component(&self, k: usize, axis: usize) -> ArrayView2<'_, f64> {
        self.data
            .index_axis(Axis(0), k)
            .index_axis_move(Axis(0), axis)
    }

    pub fn component_mut(&mut self, k: usize, axis: usize) -> ArrayViewMut2<'_, f64> {
        self.data
            .index_axis_mut(Axis(0), k)
            .index_axis_move(Axis(0), axis)
    }

    /// Largest per-pixel Euclidean norm of the 2-vectors.
    pub fn max_pixel_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for k in 0..self.channels() {
            let a = self.component(k, 0);
            let b = self.component(k, 1);
            for (x, y) in a.iter().zip(b.iter()) {
                best = best.max(x.hypot(*y));
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
