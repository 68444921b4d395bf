//! Statistics parameter coding, refresh scheduling and overhead accounting.
//!
//! Three signaling modes exist. Baseline carries no statistics segment at
//! all (per-frame min/max travels with each frame instead). Full carries one
//! `(mean, std)` pair per tensor plus one for the fused tensor, as binary32
//! little-endian, mean before std, tensors in order and the fused pair last:
//! `8·(N+1)` bytes. Simplified carries one pooled pair as bfloat16: 4 bytes.
//!
//! One segment is emitted per refresh period of `L` frames and reused for
//! the following `L − 1` frames.

use crate::tensor::TensorStats;
use crate::{Error, Result};

/// Statistics signaling mode, coded as one byte in the stream header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMode {
    /// Per-frame min/max, inverse min-max at the decoder, no rescaling.
    Baseline = 0,
    /// Per-tensor and fused statistics in binary32.
    Full = 1,
    /// Single pooled statistics pair in bfloat16.
    Simplified = 2,
}

impl StatsMode {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(StatsMode::Baseline),
            1 => Ok(StatsMode::Full),
            2 => Ok(StatsMode::Simplified),
            other => Err(Error::CorruptStream(format!("unknown statistics mode {other}"))),
        }
    }

    /// Encoded segment size in bytes for `tensor_count` tensors.
    pub fn segment_len(self, tensor_count: usize) -> usize {
        match self {
            StatsMode::Baseline => 0,
            StatsMode::Full => 8 * (tensor_count + 1),
            StatsMode::Simplified => 4,
        }
    }
}

/// The statistics transmitted for one refresh period.
///
/// The variant fixes the arity: Full carries exactly `N + 1` pairs,
/// Simplified exactly one, Baseline none.
#[derive(Debug, Clone, PartialEq)]
pub enum StatsParams {
    Baseline,
    Full {
        per_tensor: Vec<TensorStats>,
        fused: TensorStats,
    },
    Simplified {
        pooled: TensorStats,
    },
}

impl StatsParams {
    pub fn mode(&self) -> StatsMode {
        match self {
            StatsParams::Baseline => StatsMode::Baseline,
            StatsParams::Full { .. } => StatsMode::Full,
            StatsParams::Simplified { .. } => StatsMode::Simplified,
        }
    }
}

/// Truncate a binary32 to bfloat16 bits with round-to-nearest-even.
///
/// The result is exactly the upper 16 bits of the binary32 pattern after
/// rounding at bit 16; NaN payloads are quieted instead of rounded.
pub fn f32_to_bf16_bits(value: f32) -> u16 {
    let bits = value.to_bits();
    if value.is_nan() {
        return ((bits >> 16) as u16) | 0x0040;
    }
    let upper = (bits >> 16) as u16;
    let lower = bits & 0xFFFF;
    let round_up = lower > 0x8000 || (lower == 0x8000 && upper & 1 == 1);
    if round_up {
        upper.wrapping_add(1)
    } else {
        upper
    }
}

/// Widen bfloat16 bits back to binary32 (exact).
pub fn bf16_bits_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

fn check_finite(s: &TensorStats, what: &str) -> Result<()> {
    if !s.mean.is_finite() || !s.std.is_finite() {
        return Err(Error::InvalidStats(format!(
            "{what} statistics ({}, {}) are not finite",
            s.mean, s.std
        )));
    }
    if s.std < 0.0 {
        return Err(Error::InvalidStats(format!("{what} standard deviation {} < 0", s.std)));
    }
    Ok(())
}

/// Serialize a statistics segment.
pub fn encode_stats(params: &StatsParams) -> Result<Vec<u8>> {
    match params {
        StatsParams::Baseline => Ok(Vec::new()),
        StatsParams::Full { per_tensor, fused } => {
            if per_tensor.is_empty() {
                return Err(Error::InvalidStats("full mode needs at least one tensor".into()));
            }
            let mut out = Vec::with_capacity(8 * (per_tensor.len() + 1));
            for (n, s) in per_tensor.iter().enumerate() {
                check_finite(s, &format!("tensor {n}"))?;
                out.extend_from_slice(&s.mean.to_le_bytes());
                out.extend_from_slice(&s.std.to_le_bytes());
            }
            check_finite(fused, "fused")?;
            out.extend_from_slice(&fused.mean.to_le_bytes());
            out.extend_from_slice(&fused.std.to_le_bytes());
            Ok(out)
        }
        StatsParams::Simplified { pooled } => {
            check_finite(pooled, "pooled")?;
            let mut out = Vec::with_capacity(4);
            out.extend_from_slice(&f32_to_bf16_bits(pooled.mean).to_le_bytes());
            out.extend_from_slice(&f32_to_bf16_bits(pooled.std).to_le_bytes());
            Ok(out)
        }
    }
}

/// Inverse of [`encode_stats`] for a known mode and tensor count.
///
/// Full decodes bit-exactly; Simplified decodes to the bfloat16-rounded
/// values. Segments carrying parameters no encoder can emit (non-finite, or
/// a negative standard deviation) are rejected.
pub fn decode_stats(bytes: &[u8], mode: StatsMode, tensor_count: usize) -> Result<StatsParams> {
    let expected = mode.segment_len(tensor_count);
    if bytes.len() < expected {
        return Err(Error::TruncatedStream(format!(
            "statistics segment is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::CorruptStream(format!(
            "statistics segment is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    match mode {
        StatsMode::Baseline => Ok(StatsParams::Baseline),
        StatsMode::Full => {
            let mut pairs = bytes.chunks_exact(8).map(|c| {
                TensorStats::new(
                    f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                    f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                )
            });
            let per_tensor: Vec<TensorStats> = pairs.by_ref().take(tensor_count).collect();
            let fused = pairs.next().expect("length checked above");
            for (n, s) in per_tensor.iter().enumerate() {
                check_finite(s, &format!("decoded tensor {n}"))?;
            }
            check_finite(&fused, "decoded fused")?;
            Ok(StatsParams::Full { per_tensor, fused })
        }
        StatsMode::Simplified => {
            let mean = bf16_bits_to_f32(u16::from_le_bytes([bytes[0], bytes[1]]));
            let std = bf16_bits_to_f32(u16::from_le_bytes([bytes[2], bytes[3]]));
            let pooled = TensorStats::new(mean, std);
            check_finite(&pooled, "decoded pooled")?;
            Ok(StatsParams::Simplified { pooled })
        }
    }
}

/// True on frames that start a refresh period (`frame_index mod L = 0`).
pub fn refresh_schedule(frame_index: u32, refresh_period: u16) -> bool {
    assert!(refresh_period >= 1, "refresh period must be at least 1");
    frame_index.is_multiple_of(refresh_period as u32)
}

/// Total statistics/min-max overhead in bytes for a coded sequence.
///
/// Baseline pays 8 bytes on every frame; the other modes pay one segment per
/// refresh period. Full therefore wins over baseline exactly when a period
/// spans more than `N + 1` frames.
pub fn overhead_bytes(mode: StatsMode, tensor_count: usize, refresh_period: u16, frames: u64) -> u64 {
    assert!(refresh_period >= 1, "refresh period must be at least 1");
    let periods = frames.div_ceil(refresh_period as u64);
    match mode {
        StatsMode::Baseline => 8 * frames,
        StatsMode::Full => 8 * (tensor_count as u64 + 1) * periods,
        StatsMode::Simplified => 4 * periods,
    }
}
