//! Feature tensors, tensor sets and their global statistics.
//!
//! A [`FeatureTensor`] is one 3-D split-point tensor in channel-major
//! (channel, then row, then column) layout. A [`FeatureSet`] is the ordered
//! group of `N` tensors produced for one inference frame. Statistics are
//! always global per tensor: one mean and one population standard deviation
//! over all `C·H·W` elements.

use crate::{Error, Result};

/// Shape of a single 3-D feature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorShape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl TensorShape {
    pub fn new(channels: u32, height: u32, width: u32) -> Self {
        Self { channels, height, width }
    }

    /// Total element count `C·H·W`, saturating on (absurd) overflow.
    pub fn element_count(&self) -> usize {
        (self.channels as usize)
            .saturating_mul(self.height as usize)
            .saturating_mul(self.width as usize)
    }
}

/// Ordered list of tensor shapes describing one split point.
///
/// Shapes are constant for a whole sequence; every [`FeatureSet`] of the
/// sequence carries tensors of exactly these shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSpec {
    shapes: Vec<TensorShape>,
}

impl ShapeSpec {
    /// At least one tensor, at most 255 (the container codes `N` as one byte),
    /// all dimensions positive.
    pub fn new(shapes: Vec<TensorShape>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::InvalidInput("shape spec needs at least one tensor".into()));
        }
        if shapes.len() > 255 {
            return Err(Error::InvalidInput(format!(
                "shape spec has {} tensors, the container supports at most 255",
                shapes.len()
            )));
        }
        for (n, s) in shapes.iter().enumerate() {
            if s.channels == 0 || s.height == 0 || s.width == 0 {
                return Err(Error::InvalidInput(format!(
                    "tensor {n} has a zero dimension ({}x{}x{})",
                    s.channels, s.height, s.width
                )));
            }
        }
        Ok(Self { shapes })
    }

    /// Feature-pyramid split point: four tensors of 256 channels at
    /// resolutions `input/4`, `input/8`, `input/16` and `input/32`.
    ///
    /// `input_height` and `input_width` must be multiples of 32.
    pub fn fpn(input_height: u32, input_width: u32) -> Result<Self> {
        if !input_height.is_multiple_of(32) || !input_width.is_multiple_of(32) {
            return Err(Error::InvalidInput(format!(
                "pyramid input resolution {input_height}x{input_width} must be a multiple of 32"
            )));
        }
        let shapes = (2..=5)
            .map(|level| TensorShape::new(256, input_height >> level, input_width >> level))
            .collect();
        Self::new(shapes)
    }

    /// Backbone split point with three tensors:
    /// `256x76x136`, `512x38x68` and `1024x19x34`.
    pub fn darknet() -> Self {
        Self {
            shapes: vec![
                TensorShape::new(256, 76, 136),
                TensorShape::new(512, 38, 68),
                TensorShape::new(1024, 19, 34),
            ],
        }
    }

    pub fn shapes(&self) -> &[TensorShape] {
        &self.shapes
    }

    pub fn tensor_count(&self) -> usize {
        self.shapes.len()
    }
}

/// A 3-D feature tensor holding binary32 values in channel-major layout.
///
/// Invariants enforced at construction: all dimensions positive, data length
/// equals `C·H·W`, every value finite. Instances are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Result<Self> {
        if shape.element_count() == 0 {
            return Err(Error::InvalidTensor(format!(
                "empty tensor shape {}x{}x{}",
                shape.channels, shape.height, shape.width
            )));
        }
        if data.len() != shape.element_count() {
            return Err(Error::InvalidTensor(format!(
                "data length {} does not match shape {}x{}x{} ({} elements)",
                data.len(),
                shape.channels,
                shape.height,
                shape.width,
                shape.element_count()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value {} at element {pos}",
                data[pos]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Tensor filled with a single value.
    pub fn constant(shape: TensorShape, value: f32) -> Result<Self> {
        Self::new(shape, vec![value; shape.element_count()])
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn channels(&self) -> u32 {
        self.shape.channels
    }

    pub fn height(&self) -> u32 {
        self.shape.height
    }

    pub fn width(&self) -> u32 {
        self.shape.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }
}

/// The ordered set of `N ≥ 1` feature tensors computed for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    tensors: Vec<FeatureTensor>,
    frame_index: u32,
}

impl FeatureSet {
    pub fn new(tensors: Vec<FeatureTensor>, frame_index: u32) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidInput("feature set needs at least one tensor".into()));
        }
        if tensors.len() > 255 {
            return Err(Error::InvalidInput(format!(
                "feature set has {} tensors, the container supports at most 255",
                tensors.len()
            )));
        }
        Ok(Self { tensors, frame_index })
    }

    pub fn tensors(&self) -> &[FeatureTensor] {
        &self.tensors
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    pub fn with_frame_index(mut self, frame_index: u32) -> Self {
        self.frame_index = frame_index;
        self
    }

    /// Shape spec describing this set's tensors in order.
    pub fn shape_spec(&self) -> ShapeSpec {
        ShapeSpec {
            shapes: self.tensors.iter().map(|t| t.shape()).collect(),
        }
    }
}

/// Global mean and population standard deviation of one tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorStats {
    pub mean: f32,
    pub std: f32,
}

impl TensorStats {
    pub fn new(mean: f32, std: f32) -> Self {
        Self { mean, std }
    }
}

/// Welford single-pass mean/variance in 64-bit, before binary32 rounding.
///
/// Returns `(mean, population_std)`. Callers guarantee `data` is non-empty.
pub(crate) fn stats_f64(data: &[f32]) -> (f64, f64) {
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut count = 0.0f64;
    for &v in data {
        let v = v as f64;
        count += 1.0;
        let delta = v - mean;
        mean += delta / count;
        m2 += delta * (v - mean);
    }
    (mean, (m2 / count).max(0.0).sqrt())
}

/// Global statistics of a raw value slice.
///
/// Accumulation runs in 64-bit and the result is rounded to binary32,
/// using the population form (divisor `K`, not `K−1`).
pub fn compute_data_stats(data: &[f32]) -> Result<TensorStats> {
    if data.is_empty() {
        return Err(Error::InvalidTensor("cannot compute statistics of an empty tensor".into()));
    }
    let (mean, std) = stats_f64(data);
    Ok(TensorStats::new(mean as f32, std as f32))
}

/// Global statistics of one feature tensor.
pub fn compute_stats(tensor: &FeatureTensor) -> TensorStats {
    // Tensors are non-empty by construction.
    compute_data_stats(tensor.data()).expect("feature tensors are never empty")
}

/// Statistics of the sum of independent per-tensor distributions:
/// the means add and the variances add.
///
/// Computed in 64-bit and rounded to binary32.
pub fn pooled_sum_stats(stats: &[TensorStats]) -> Result<TensorStats> {
    if stats.is_empty() {
        return Err(Error::InvalidInput("pooled statistics need at least one tensor".into()));
    }
    let mean: f64 = stats.iter().map(|s| s.mean as f64).sum();
    let var: f64 = stats.iter().map(|s| (s.std as f64) * (s.std as f64)).sum();
    Ok(TensorStats::new(mean as f32, var.sqrt() as f32))
}
