//! FCMS: the coded-stream container format.
//!
//! All integers little-endian. The stream is self-describing: decoding needs
//! no side information.
//!
//! ```text
//! header (33 + 12·N bytes)
//!   0..4    magic "FCMS"
//!   4       version        u8 = 1
//!   5       mode           u8   statistics mode (0/1/2)
//!   6       q              u8   quantization bit depth
//!   7       N              u8   tensors per frame
//!   8..10   L              u16  refresh period in coded frames
//!   10      fusion id      u8
//!   11      codec id       u8
//!   12      temporal flag  u8   0 or 1
//!   13..17  frame count    u32  original (pre-downsampling) frames
//!   17..    N x (C u32, H u32, W u32)
//!   ...     fused C, H, W  3 x u32
//!   ...     fps numerator  u16
//!   ...     fps denominator u16
//!
//! then, per refresh period:
//!   statistics segment     0, 4 or 8·(N+1) bytes depending on mode
//!   per frame of the period:
//!     min, max             2 x f32, baseline mode only
//!     payload length       u32
//!     payload              inner-codec bytes
//! ```
//!
//! The statistics segment travels with the first frame of its period, and
//! one segment is reused for the whole period.

use crate::codec::CodecPayload;
use crate::fusion::FusionKind;
use crate::packing::MinMax;
use crate::stats::{decode_stats, encode_stats, StatsMode, StatsParams};
use crate::temporal::kept_count;
use crate::tensor::{ShapeSpec, TensorShape};
use crate::{Error, Result};

pub const FCMS_MAGIC: [u8; 4] = *b"FCMS";
pub const FCMS_VERSION: u8 = 1;

/// Fixed per-stream metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub mode: StatsMode,
    pub bit_depth: u8,
    pub refresh_period: u16,
    pub fusion_id: u8,
    pub codec_id: u8,
    pub temporal: bool,
    /// Original frame count, before temporal downsampling.
    pub frame_count: u32,
    pub tensor_shapes: Vec<TensorShape>,
    pub fused_shape: TensorShape,
    pub fps_num: u16,
    pub fps_den: u16,
}

impl StreamHeader {
    pub fn tensor_count(&self) -> usize {
        self.tensor_shapes.len()
    }

    /// Frames actually present in the stream.
    pub fn coded_frame_count(&self) -> u32 {
        kept_count(self.frame_count, self.temporal)
    }

    /// Refresh periods in the stream.
    pub fn period_count(&self) -> u32 {
        self.coded_frame_count().div_ceil(self.refresh_period as u32)
    }

    pub fn shape_spec(&self) -> Result<ShapeSpec> {
        ShapeSpec::new(self.tensor_shapes.clone())
    }

    /// Serialized header size in bytes.
    pub fn byte_len(&self) -> usize {
        33 + 12 * self.tensor_shapes.len()
    }

    fn validate(&self) -> Result<()> {
        if self.tensor_shapes.is_empty() || self.tensor_shapes.len() > 255 {
            return Err(Error::MuxError(format!(
                "{} tensor shapes (1..=255 supported)",
                self.tensor_shapes.len()
            )));
        }
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(Error::MuxError(format!("bit depth {} outside 1..=16", self.bit_depth)));
        }
        if self.refresh_period == 0 {
            return Err(Error::MuxError("refresh period must be at least 1".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::MuxError("frame count must be at least 1".into()));
        }
        if self.fps_den == 0 {
            return Err(Error::MuxError("fps denominator must be at least 1".into()));
        }
        for s in self.tensor_shapes.iter().chain([&self.fused_shape]) {
            if s.element_count() == 0 {
                return Err(Error::MuxError("zero-sized tensor shape in header".into()));
            }
        }
        FusionKind::from_id(self.fusion_id)
            .map_err(|_| Error::MuxError(format!("unknown fusion id {}", self.fusion_id)))?;
        Ok(())
    }
}

/// One coded frame: optional baseline min/max plus the codec payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub min_max: Option<MinMax>,
    pub payload: CodecPayload,
}

/// One refresh period: its statistics segment and its frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub stats: StatsParams,
    pub frames: Vec<FrameRecord>,
}

/// A fully parsed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub header: StreamHeader,
    pub periods: Vec<PeriodRecord>,
}

/// Serialize a stream, byte-exact and deterministic.
pub fn mux(stream: &Stream) -> Result<Vec<u8>> {
    let header = &stream.header;
    header.validate()?;

    let coded = header.coded_frame_count();
    let expected_periods = header.period_count();
    if stream.periods.len() as u32 != expected_periods {
        return Err(Error::MuxError(format!(
            "{} periods for {} coded frames with period {}",
            stream.periods.len(),
            coded,
            header.refresh_period
        )));
    }

    let mut out = Vec::with_capacity(header.byte_len());
    out.extend_from_slice(&FCMS_MAGIC);
    out.push(FCMS_VERSION);
    out.push(header.mode.id());
    out.push(header.bit_depth);
    out.push(header.tensor_shapes.len() as u8);
    out.extend_from_slice(&header.refresh_period.to_le_bytes());
    out.push(header.fusion_id);
    out.push(header.codec_id);
    out.push(header.temporal as u8);
    out.extend_from_slice(&header.frame_count.to_le_bytes());
    for s in header.tensor_shapes.iter().chain([&header.fused_shape]) {
        out.extend_from_slice(&s.channels.to_le_bytes());
        out.extend_from_slice(&s.height.to_le_bytes());
        out.extend_from_slice(&s.width.to_le_bytes());
    }
    out.extend_from_slice(&header.fps_num.to_le_bytes());
    out.extend_from_slice(&header.fps_den.to_le_bytes());
    debug_assert_eq!(out.len(), header.byte_len());

    for (p, period) in stream.periods.iter().enumerate() {
        let start = p as u32 * header.refresh_period as u32;
        let expected_frames = (coded - start).min(header.refresh_period as u32);
        if period.frames.len() as u32 != expected_frames {
            return Err(Error::MuxError(format!(
                "period {p} has {} frames, expected {expected_frames}",
                period.frames.len()
            )));
        }
        if period.stats.mode() != header.mode {
            return Err(Error::MuxError(format!(
                "period {p} statistics are {:?}, header mode is {:?}",
                period.stats.mode(),
                header.mode
            )));
        }
        if let StatsParams::Full { per_tensor, .. } = &period.stats {
            if per_tensor.len() != header.tensor_count() {
                return Err(Error::MuxError(format!(
                    "period {p} carries {} tensor statistics, header has {} tensors",
                    per_tensor.len(),
                    header.tensor_count()
                )));
            }
        }
        let segment = encode_stats(&period.stats)?;
        out.extend_from_slice(&segment);

        for (f, frame) in period.frames.iter().enumerate() {
            match (header.mode, &frame.min_max) {
                (StatsMode::Baseline, Some(mm)) => {
                    // Mirror the demux-side check so every muxed stream parses.
                    if !mm.min.is_finite() || !mm.max.is_finite() || mm.max < mm.min {
                        return Err(Error::MuxError(format!(
                            "frame {f} of period {p} has invalid min/max ({}, {})",
                            mm.min, mm.max
                        )));
                    }
                    out.extend_from_slice(&mm.min.to_le_bytes());
                    out.extend_from_slice(&mm.max.to_le_bytes());
                }
                (StatsMode::Baseline, None) => {
                    return Err(Error::MuxError(format!(
                        "baseline frame {f} of period {p} is missing min/max"
                    )));
                }
                (_, Some(_)) => {
                    return Err(Error::MuxError(format!(
                        "frame {f} of period {p} carries min/max outside baseline mode"
                    )));
                }
                (_, None) => {}
            }
            if frame.payload.codec_id != header.codec_id {
                return Err(Error::MuxError(format!(
                    "frame {f} of period {p} was coded with codec {}, header says {}",
                    frame.payload.codec_id, header.codec_id
                )));
            }
            let len = frame.payload.frame_bytes.len();
            if len > u32::MAX as usize {
                return Err(Error::MuxError(format!("payload of {len} bytes exceeds u32")));
            }
            out.extend_from_slice(&(len as u32).to_le_bytes());
            out.extend_from_slice(&frame.payload.frame_bytes);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TruncatedStream(format!(
                "stream ended while reading {what} at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn parse_header(cur: &mut Cursor) -> Result<StreamHeader> {
    let magic = cur.take(4, "magic")?;
    if magic != FCMS_MAGIC {
        return Err(Error::NotAStream(format!("bad FCMS magic {magic:02x?}")));
    }
    let version = cur.u8("version")?;
    if version != FCMS_VERSION {
        return Err(Error::CorruptStream(format!("unsupported version {version}")));
    }
    let mode = StatsMode::from_id(cur.u8("mode")?)?;
    let bit_depth = cur.u8("bit depth")?;
    if bit_depth == 0 || bit_depth > 16 {
        return Err(Error::CorruptStream(format!("bit depth {bit_depth} outside 1..=16")));
    }
    let tensor_count = cur.u8("tensor count")? as usize;
    if tensor_count == 0 {
        return Err(Error::CorruptStream("tensor count is zero".into()));
    }
    let refresh_period = cur.u16("refresh period")?;
    if refresh_period == 0 {
        return Err(Error::CorruptStream("refresh period is zero".into()));
    }
    let fusion_id = cur.u8("fusion id")?;
    FusionKind::from_id(fusion_id)?;
    let codec_id = cur.u8("codec id")?;
    let temporal = match cur.u8("temporal flag")? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::CorruptStream(format!("temporal flag {other} is not 0 or 1")));
        }
    };
    let frame_count = cur.u32("frame count")?;
    if frame_count == 0 {
        return Err(Error::CorruptStream("frame count is zero".into()));
    }
    let mut shapes = Vec::with_capacity(tensor_count + 1);
    for _ in 0..=tensor_count {
        let c = cur.u32("shape channels")?;
        let h = cur.u32("shape height")?;
        let w = cur.u32("shape width")?;
        let shape = TensorShape::new(c, h, w);
        if shape.element_count() == 0 {
            return Err(Error::CorruptStream(format!("zero-sized shape {c}x{h}x{w}")));
        }
        if shape.element_count() > u32::MAX as usize {
            return Err(Error::CorruptStream(format!(
                "shape {c}x{h}x{w} is beyond the supported size"
            )));
        }
        shapes.push(shape);
    }
    let fused_shape = shapes.pop().expect("one fused shape parsed");
    let fps_num = cur.u16("fps numerator")?;
    let fps_den = cur.u16("fps denominator")?;
    if fps_den == 0 {
        return Err(Error::CorruptStream("fps denominator is zero".into()));
    }
    Ok(StreamHeader {
        mode,
        bit_depth,
        refresh_period,
        fusion_id,
        codec_id,
        temporal,
        frame_count,
        tensor_shapes: shapes,
        fused_shape,
        fps_num,
        fps_den,
    })
}

/// Parse a stream. Exact inverse of [`mux`] on valid input; truncated or
/// inconsistent input yields a typed error, never a panic.
pub fn demux(bytes: &[u8]) -> Result<Stream> {
    let mut cur = Cursor { bytes, pos: 0 };
    let header = parse_header(&mut cur)?;

    let coded = header.coded_frame_count();
    let mut periods = Vec::with_capacity(header.period_count() as usize);
    let mut remaining_frames = coded;
    while remaining_frames > 0 {
        let segment_len = header.mode.segment_len(header.tensor_count());
        let segment = cur.take(segment_len, "statistics segment")?;
        let stats = decode_stats(segment, header.mode, header.tensor_count())?;

        let in_period = remaining_frames.min(header.refresh_period as u32);
        let mut frames = Vec::with_capacity(in_period as usize);
        for _ in 0..in_period {
            let min_max = if header.mode == StatsMode::Baseline {
                let min = cur.f32("frame minimum")?;
                let max = cur.f32("frame maximum")?;
                if !min.is_finite() || !max.is_finite() || max < min {
                    return Err(Error::CorruptStream(format!(
                        "invalid frame min/max ({min}, {max})"
                    )));
                }
                Some(MinMax { min, max })
            } else {
                None
            };
            let len = cur.u32("payload length")? as usize;
            if len > bytes.len() {
                return Err(Error::CorruptStream(format!(
                    "payload length {len} overruns the {}-byte stream",
                    bytes.len()
                )));
            }
            let payload = cur.take(len, "payload")?;
            frames.push(FrameRecord {
                min_max,
                payload: CodecPayload {
                    codec_id: header.codec_id,
                    frame_bytes: payload.to_vec(),
                },
            });
        }
        remaining_frames -= in_period;
        periods.push(PeriodRecord { stats, frames });
    }
    if cur.remaining() != 0 {
        return Err(Error::CorruptStream(format!(
            "{} trailing bytes after the last frame",
            cur.remaining()
        )));
    }
    Ok(Stream { header, periods })
}

/// Byte accounting of a stream, split into exact categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitrateReport {
    pub total_bytes: u64,
    pub header_bytes: u64,
    pub stats_bytes: u64,
    /// Baseline per-frame min/max.
    pub minmax_bytes: u64,
    /// Per-frame payload length prefixes.
    pub framing_bytes: u64,
    pub payload_bytes: u64,
    /// `total_bits · fps / frame_count / 1000`, against original frames.
    pub kbps: f64,
}

/// Account every byte of a stream. The categories always sum to the total.
pub fn accounting(bytes: &[u8]) -> Result<BitrateReport> {
    let stream = demux(bytes)?;
    let header = &stream.header;
    let coded = header.coded_frame_count() as u64;

    let header_bytes = header.byte_len() as u64;
    let stats_bytes =
        header.mode.segment_len(header.tensor_count()) as u64 * stream.periods.len() as u64;
    let minmax_bytes = if header.mode == StatsMode::Baseline { 8 * coded } else { 0 };
    let framing_bytes = 4 * coded;
    let payload_bytes: u64 = stream
        .periods
        .iter()
        .flat_map(|p| &p.frames)
        .map(|f| f.payload.byte_count() as u64)
        .sum();

    let total_bytes = bytes.len() as u64;
    debug_assert_eq!(
        total_bytes,
        header_bytes + stats_bytes + minmax_bytes + framing_bytes + payload_bytes
    );

    let fps = header.fps_num as f64 / header.fps_den as f64;
    let kbps = total_bytes as f64 * 8.0 * fps / header.frame_count as f64 / 1000.0;
    Ok(BitrateReport {
        total_bytes,
        header_bytes,
        stats_bytes,
        minmax_bytes,
        framing_bytes,
        payload_bytes,
        kbps,
    })
}
