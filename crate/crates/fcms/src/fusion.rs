//! Multi-scale feature fusion and restoration.
//!
//! The reference rule is a pure rearrangement: every tensor is mapped onto
//! the coarsest spatial grid of the set by space-to-channel blocks, and the
//! results are concatenated along the channel axis in tensor order. No
//! arithmetic touches the values, so restoration is bit-exact.
//!
//! The rule is identified by a one-byte id in the stream header
//! ([`FusionKind`]) so that a different fusion can be slotted in without a
//! container change.

use crate::tensor::{FeatureSet, FeatureTensor, ShapeSpec, TensorShape};
use crate::{Error, Result};

/// Fusion rule identifier carried in the stream header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// Single-tensor passthrough.
    Identity = 0,
    /// Space-to-channel rearrangement onto the coarsest grid.
    SpaceToChannel = 1,
}

impl FusionKind {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(FusionKind::Identity),
            1 => Ok(FusionKind::SpaceToChannel),
            other => Err(Error::CorruptStream(format!("unknown fusion id {other}"))),
        }
    }

    /// The rule used by the encoder for a given spec.
    pub fn for_spec(spec: &ShapeSpec) -> Self {
        if spec.tensor_count() == 1 {
            FusionKind::Identity
        } else {
            FusionKind::SpaceToChannel
        }
    }
}

/// Single tensor produced by fusing a feature set, channel-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl FusedTensor {
    pub(crate) fn from_parts(shape: TensorShape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.element_count(), data.len());
        Self { shape, data }
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
}

/// Per-tensor block factors for the space-to-channel mapping.
struct BlockPlan {
    grid_height: u32,
    grid_width: u32,
    /// (block_h, block_w, fused channel offset) per tensor.
    blocks: Vec<(u32, u32, u32)>,
    fused_channels: u32,
}

fn plan(spec: &ShapeSpec) -> Result<BlockPlan> {
    let grid_height = spec.shapes().iter().map(|s| s.height).min().expect("spec is non-empty");
    let grid_width = spec.shapes().iter().map(|s| s.width).min().expect("spec is non-empty");
    let mut blocks = Vec::with_capacity(spec.tensor_count());
    let mut fused_channels = 0u32;
    for (n, s) in spec.shapes().iter().enumerate() {
        if s.height % grid_height != 0 || s.width % grid_width != 0 {
            return Err(Error::UnsupportedGeometry(format!(
                "tensor {n} ({}x{}) does not divide the coarsest grid {grid_height}x{grid_width}",
                s.height, s.width
            )));
        }
        let bh = s.height / grid_height;
        let bw = s.width / grid_width;
        blocks.push((bh, bw, fused_channels));
        let per_block = bh.checked_mul(bw).ok_or_else(overflow)?;
        fused_channels = fused_channels
            .checked_add(s.channels.checked_mul(per_block).ok_or_else(overflow)?)
            .ok_or_else(overflow)?;
    }
    Ok(BlockPlan { grid_height, grid_width, blocks, fused_channels })
}

fn overflow() -> Error {
    Error::UnsupportedGeometry("fused channel count overflows u32".into())
}

/// Shape the reference rule produces for a spec, without touching data.
pub fn fused_shape(spec: &ShapeSpec) -> Result<TensorShape> {
    let p = plan(spec)?;
    Ok(TensorShape::new(p.fused_channels, p.grid_height, p.grid_width))
}

/// Fuse a feature set into a single tensor.
///
/// For a one-tensor set this is the identity. The output element multiset
/// always equals the input element multiset.
pub fn fuse(set: &FeatureSet) -> Result<FusedTensor> {
    let spec = set.shape_spec();
    let p = plan(&spec)?;
    let gh = p.grid_height as usize;
    let gw = p.grid_width as usize;
    let mut data = vec![0.0f32; p.fused_channels as usize * gh * gw];

    for (tensor, &(bh, bw, base)) in set.tensors().iter().zip(&p.blocks) {
        let (bh, bw) = (bh as usize, bw as usize);
        let tw = tensor.width() as usize;
        let th = tensor.height() as usize;
        let src = tensor.data();
        for c in 0..tensor.channels() as usize {
            for dy in 0..bh {
                for dx in 0..bw {
                    let fused_c = base as usize + c * bh * bw + dy * bw + dx;
                    let out_plane = fused_c * gh * gw;
                    let in_plane = c * th * tw;
                    for y in 0..gh {
                        let in_row = in_plane + (y * bh + dy) * tw + dx;
                        let out_row = out_plane + y * gw;
                        for x in 0..gw {
                            data[out_row + x] = src[in_row + x * bw];
                        }
                    }
                }
            }
        }
    }
    Ok(FusedTensor::from_parts(
        TensorShape::new(p.fused_channels, p.grid_height, p.grid_width),
        data,
    ))
}

/// Exact inverse of [`fuse`] for the matching shape spec.
pub fn restore(fused: &FusedTensor, spec: &ShapeSpec) -> Result<FeatureSet> {
    let p = plan(spec)?;
    let expected = TensorShape::new(p.fused_channels, p.grid_height, p.grid_width);
    if fused.shape() != expected {
        return Err(Error::UnsupportedGeometry(format!(
            "fused tensor is {}x{}x{} but the spec requires {}x{}x{}",
            fused.channels(),
            fused.height(),
            fused.width(),
            expected.channels,
            expected.height,
            expected.width
        )));
    }

    let gh = p.grid_height as usize;
    let gw = p.grid_width as usize;
    let src = fused.data();
    let mut tensors = Vec::with_capacity(spec.tensor_count());
    for (&shape, &(bh, bw, base)) in spec.shapes().iter().zip(&p.blocks) {
        let (bh, bw) = (bh as usize, bw as usize);
        let tw = shape.width as usize;
        let th = shape.height as usize;
        let mut data = vec![0.0f32; shape.element_count()];
        for c in 0..shape.channels as usize {
            for dy in 0..bh {
                for dx in 0..bw {
                    let fused_c = base as usize + c * bh * bw + dy * bw + dx;
                    let in_plane = fused_c * gh * gw;
                    let out_plane = c * th * tw;
                    for y in 0..gh {
                        let in_row = in_plane + y * gw;
                        let out_row = out_plane + (y * bh + dy) * tw + dx;
                        for x in 0..gw {
                            data[out_row + x * bw] = src[in_row + x];
                        }
                    }
                }
            }
        }
        tensors.push(FeatureTensor::new(shape, data)?);
    }
    // The real frame index is assigned by the decode pipeline.
    FeatureSet::new(tensors, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_sequence;

    #[test]
    fn single_tensor_is_identity() {
        let spec = ShapeSpec::new(vec![TensorShape::new(3, 4, 5)]).unwrap();
        let set = &generate_sequence(&spec, 1, 1, 0.0)[0];
        let fused = fuse(set).unwrap();
        assert_eq!(fused.shape(), set.tensors()[0].shape());
        assert_eq!(fused.data(), set.tensors()[0].data());
        assert_eq!(FusionKind::for_spec(&spec), FusionKind::Identity);
    }

    #[test]
    fn fpn_channel_count_matches_block_arithmetic() {
        let spec = ShapeSpec::fpn(128, 128).unwrap();
        // Independent count: each level contributes C·(H/Hmin)·(W/Wmin).
        let hmin = spec.shapes().iter().map(|s| s.height).min().unwrap();
        let wmin = spec.shapes().iter().map(|s| s.width).min().unwrap();
        let expected: u32 = spec
            .shapes()
            .iter()
            .map(|s| s.channels * (s.height / hmin) * (s.width / wmin))
            .sum();
        assert_eq!(expected, 21760);
        let shape = fused_shape(&spec).unwrap();
        assert_eq!(shape.channels, 21760);
        assert_eq!((shape.height, shape.width), (4, 4));
    }

    #[test]
    fn fpn_round_trip_is_bit_exact() {
        let spec = ShapeSpec::fpn(128, 128).unwrap();
        let set = &generate_sequence(&spec, 1, 3, 0.0)[0];
        let fused = fuse(set).unwrap();
        let restored = restore(&fused, &spec).unwrap();
        assert_eq!(set.tensors(), restored.tensors());
    }

    #[test]
    fn darknet_round_trip_is_bit_exact() {
        let spec = ShapeSpec::darknet();
        let set = &generate_sequence(&spec, 1, 4, 0.0)[0];
        let fused = fuse(set).unwrap();
        assert_eq!(fused.channels(), 256 * 16 + 512 * 4 + 1024);
        assert_eq!((fused.height(), fused.width()), (19, 34));
        let restored = restore(&fused, &spec).unwrap();
        assert_eq!(set.tensors(), restored.tensors());
    }

    #[test]
    fn two_level_round_trip() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(3, 8, 6),
            TensorShape::new(5, 4, 3),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 9, 0.0)[0];
        let fused = fuse(set).unwrap();
        assert_eq!(fused.channels(), 3 * 4 + 5);
        let restored = restore(&fused, &spec).unwrap();
        assert_eq!(set.tensors(), restored.tensors());
    }

    #[test]
    fn fusion_is_a_rearrangement() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(2, 4, 4),
            TensorShape::new(3, 2, 2),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 11, 0.0)[0];
        let fused = fuse(set).unwrap();
        let mut input: Vec<u32> = set
            .tensors()
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect();
        let mut output: Vec<u32> = fused.data().iter().map(|v| v.to_bits()).collect();
        input.sort_unstable();
        output.sort_unstable();
        assert_eq!(input, output);
    }

    #[test]
    fn indivisible_grid_is_rejected() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(1, 3, 3),
            TensorShape::new(1, 2, 2),
        ])
        .unwrap();
        assert_eq!(fused_shape(&spec).unwrap_err().category(), "UnsupportedGeometry");
        let set = &generate_sequence(&spec, 1, 0, 0.0)[0];
        assert_eq!(fuse(set).unwrap_err().category(), "UnsupportedGeometry");
    }

    #[test]
    fn restore_rejects_mismatched_shapes() {
        let spec = ShapeSpec::new(vec![TensorShape::new(2, 4, 4)]).unwrap();
        let set = &generate_sequence(&spec, 1, 0, 0.0)[0];
        let fused = fuse(set).unwrap();
        let other = ShapeSpec::new(vec![TensorShape::new(4, 4, 4)]).unwrap();
        assert_eq!(restore(&fused, &other).unwrap_err().category(), "UnsupportedGeometry");
    }
}
