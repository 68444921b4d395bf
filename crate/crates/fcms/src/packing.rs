//! Channel tiling into 2-D frames and q-bit uniform scalar quantization.
//!
//! Channels are tiled row-major into a near-square grid
//! (`cols = ceil(sqrt(C))`, `rows = ceil(C/cols)`); unused grid cells are
//! zero. Quantization maps `[min, max]` onto `[0, 2^q − 1]` with
//! round-half-away-from-zero, fixed project-wide so streams are reproducible
//! across platforms.
//!
//! Two inverse quantizers exist: the baseline one applies inverse min-max
//! with the per-frame extremes, the proposed one divides by `2^q − 1` only
//! and leaves values in `[0, 1]` for the statistics rescaler downstream.

use crate::fusion::FusedTensor;
use crate::tensor::TensorShape;
use crate::{Error, Result};

/// Grid layout of channels within a packed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub rows: u32,
    pub cols: u32,
    pub tile_height: u32,
    pub tile_width: u32,
    pub channels: u32,
}

/// Near-square grid for `channels` tiles of `tile_height x tile_width`.
pub fn tiling_for(channels: u32, tile_height: u32, tile_width: u32) -> Tiling {
    let c = channels as u64;
    let mut cols = (c as f64).sqrt().floor() as u64;
    while cols * cols < c {
        cols += 1;
    }
    let rows = c.div_ceil(cols);
    Tiling {
        rows: rows as u32,
        cols: cols as u32,
        tile_height,
        tile_width,
        channels,
    }
}

/// A 2-D frame of tiled channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedFrame {
    height: u32,
    width: u32,
    data: Vec<f32>,
    tiling: Tiling,
}

impl PackedFrame {
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn tiling(&self) -> Tiling {
        self.tiling
    }
}

/// Per-frame extremes used by min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f32,
    pub max: f32,
}

/// A packed frame quantized to `bit_depth`-bit unsigned samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantFrame {
    height: u32,
    width: u32,
    bit_depth: u8,
    data: Vec<u16>,
}

impl QuantFrame {
    /// Every sample must fit in `bit_depth` bits (at most 16).
    pub fn new(height: u32, width: u32, bit_depth: u8, data: Vec<u16>) -> Result<Self> {
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::InvalidInput(format!(
                "bit depth {bit_depth} outside the supported 1..=16 range"
            )));
        }
        if data.len() != height as usize * width as usize {
            return Err(Error::InvalidInput(format!(
                "sample count {} does not match {height}x{width}",
                data.len()
            )));
        }
        let limit = max_level(bit_depth);
        if let Some(&bad) = data.iter().find(|&&s| s > limit) {
            return Err(Error::InvalidInput(format!(
                "sample {bad} exceeds the {bit_depth}-bit maximum {limit}"
            )));
        }
        Ok(Self { height, width, bit_depth, data })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }
}

fn max_level(bit_depth: u8) -> u16 {
    (((1u32 << bit_depth) - 1) & 0xFFFF) as u16
}

/// Tile a fused tensor into a packed frame.
pub fn pack(fused: &FusedTensor) -> PackedFrame {
    let tiling = tiling_for(fused.channels(), fused.height(), fused.width());
    let th = tiling.tile_height as usize;
    let tw = tiling.tile_width as usize;
    let width = tiling.cols as usize * tw;
    let height = tiling.rows as usize * th;
    let mut data = vec![0.0f32; width * height];
    let src = fused.data();
    for c in 0..fused.channels() as usize {
        let tile_row = c / tiling.cols as usize;
        let tile_col = c % tiling.cols as usize;
        let plane = c * th * tw;
        for y in 0..th {
            let src_row = plane + y * tw;
            let dst_row = (tile_row * th + y) * width + tile_col * tw;
            data[dst_row..dst_row + tw].copy_from_slice(&src[src_row..src_row + tw]);
        }
    }
    PackedFrame {
        height: height as u32,
        width: width as u32,
        data,
        tiling,
    }
}

/// Exact inverse of [`pack`], dropping padding cells.
pub fn unpack(frame: &PackedFrame, shape: TensorShape) -> Result<FusedTensor> {
    let expected = tiling_for(shape.channels, shape.height, shape.width);
    if frame.tiling != expected
        || frame.height as u64 != expected.rows as u64 * expected.tile_height as u64
        || frame.width as u64 != expected.cols as u64 * expected.tile_width as u64
    {
        return Err(Error::UnsupportedGeometry(format!(
            "packed frame {}x{} does not match tensor {}x{}x{}",
            frame.height, frame.width, shape.channels, shape.height, shape.width
        )));
    }
    let th = shape.height as usize;
    let tw = shape.width as usize;
    let width = frame.width as usize;
    let mut data = vec![0.0f32; shape.element_count()];
    for c in 0..shape.channels as usize {
        let tile_row = c / expected.cols as usize;
        let tile_col = c % expected.cols as usize;
        let plane = c * th * tw;
        for y in 0..th {
            let src_row = (tile_row * th + y) * width + tile_col * tw;
            data[plane + y * tw..plane + (y + 1) * tw]
                .copy_from_slice(&frame.data[src_row..src_row + tw]);
        }
    }
    Ok(FusedTensor::from_parts(shape, data))
}

/// Min-max normalize and quantize to `bit_depth` bits.
///
/// `y = round((x − min)/(max − min)·(2^q − 1))`, half away from zero. A
/// degenerate frame (`max = min`) quantizes to all zeros.
pub fn quantize(frame: &PackedFrame, bit_depth: u8) -> Result<(QuantFrame, MinMax)> {
    if bit_depth == 0 || bit_depth > 16 {
        return Err(Error::InvalidInput(format!(
            "bit depth {bit_depth} outside the supported 1..=16 range"
        )));
    }
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    // Explicit comparisons: `f32::min` may return either operand for
    // -0.0 vs +0.0, which would make the signaled extremes byte-ambiguous.
    for &v in &frame.data {
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }
    let levels = max_level(bit_depth) as f64;
    let range = max as f64 - min as f64;
    let data: Vec<u16> = if range == 0.0 {
        vec![0; frame.data.len()]
    } else {
        frame
            .data
            .iter()
            .map(|&v| {
                let scaled = (v as f64 - min as f64) / range * levels;
                (scaled.round().min(levels)) as u16
            })
            .collect()
    };
    Ok((
        QuantFrame {
            height: frame.height,
            width: frame.width,
            bit_depth,
            data,
        },
        MinMax { min, max },
    ))
}

fn dequantize_with(
    quant: &QuantFrame,
    tiling: Tiling,
    map: impl Fn(f64) -> f64,
) -> Result<PackedFrame> {
    if quant.height as u64 != tiling.rows as u64 * tiling.tile_height as u64
        || quant.width as u64 != tiling.cols as u64 * tiling.tile_width as u64
    {
        return Err(Error::UnsupportedGeometry(format!(
            "quantized frame {}x{} does not match tiling {}x{} of {}x{} tiles",
            quant.height, quant.width, tiling.rows, tiling.cols, tiling.tile_height,
            tiling.tile_width
        )));
    }
    let levels = max_level(quant.bit_depth) as f64;
    let data = quant.data.iter().map(|&s| map(s as f64 / levels) as f32).collect();
    Ok(PackedFrame {
        height: quant.height,
        width: quant.width,
        data,
        tiling,
    })
}

/// Inverse quantization without inverse min-max: `x = y/(2^q − 1) ∈ [0, 1]`.
///
/// Used by the statistics-signaling modes, where the rescaler restores scale
/// and the per-frame extremes are never transmitted.
pub fn dequantize_proposed(quant: &QuantFrame, tiling: Tiling) -> Result<PackedFrame> {
    dequantize_with(quant, tiling, |u| u)
}

/// Inverse quantization with inverse min-max:
/// `x = y/(2^q − 1)·(max − min) + min`.
pub fn dequantize_baseline(quant: &QuantFrame, mm: MinMax, tiling: Tiling) -> Result<PackedFrame> {
    let min = mm.min as f64;
    let range = mm.max as f64 - mm.min as f64;
    dequantize_with(quant, tiling, move |u| u * range + min)
}

/// Raw sample serialization: one byte per sample up to 8 bits, two bytes
/// little-endian up to 16.
pub fn serialize_samples(quant: &QuantFrame) -> Vec<u8> {
    if quant.bit_depth <= 8 {
        quant.data.iter().map(|&s| s as u8).collect()
    } else {
        let mut out = Vec::with_capacity(quant.data.len() * 2);
        for &s in &quant.data {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}

/// Inverse of [`serialize_samples`] for a known geometry.
pub fn deserialize_samples(
    bytes: &[u8],
    height: u32,
    width: u32,
    bit_depth: u8,
) -> Result<QuantFrame> {
    let count = height as usize * width as usize;
    let data: Vec<u16> = if bit_depth <= 8 {
        if bytes.len() != count {
            return Err(Error::DecodeError(format!(
                "expected {count} bytes of 8-bit samples, got {}",
                bytes.len()
            )));
        }
        bytes.iter().map(|&b| b as u16).collect()
    } else {
        if bytes.len() != count * 2 {
            return Err(Error::DecodeError(format!(
                "expected {} bytes of 16-bit samples, got {}",
                count * 2,
                bytes.len()
            )));
        }
        bytes
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect()
    };
    QuantFrame::new(height, width, bit_depth, data)
        .map_err(|e| Error::DecodeError(format!("invalid samples: {e}")))
}
