//! Pluggable inner codecs for quantized packed frames.
//!
//! Registry:
//!
//! | id  | name     | behaviour                                              |
//! |-----|----------|--------------------------------------------------------|
//! | 0   | raw      | lossless, the raw sample serialization                 |
//! | 1   | zdeflate | lossless, zlib-compressed raw serialization            |
//! | 2   | requant  | lossy, samples rescaled to `q' < q` bits and back      |
//! | 255 | external | frames piped through an external encoder/decoder pair  |
//!
//! The requant codec simulates codec distortion deterministically: its
//! per-sample error is bounded by `2^(q − q')` levels, and its payload holds
//! the `q'`-bit samples, so sweeping `q'` sweeps the rate. The external hook
//! preserves a path to real video encoders without making them a dependency.

use std::io::Read;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::packing::{deserialize_samples, serialize_samples, QuantFrame};
use crate::{Error, Result};

pub const CODEC_RAW: u8 = 0;
pub const CODEC_ZDEFLATE: u8 = 1;
pub const CODEC_REQUANT: u8 = 2;
pub const CODEC_EXTERNAL: u8 = 255;

/// True for ids this build can encode and decode.
pub fn codec_known(id: u8) -> bool {
    matches!(id, CODEC_RAW | CODEC_ZDEFLATE | CODEC_REQUANT | CODEC_EXTERNAL)
}

/// One encoded frame: the codec that produced it and its opaque bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecPayload {
    pub codec_id: u8,
    pub frame_bytes: Vec<u8>,
}

impl CodecPayload {
    pub fn byte_count(&self) -> usize {
        self.frame_bytes.len()
    }
}

/// Frame geometry the decoder needs to rebuild samples from a payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub height: u32,
    pub width: u32,
    pub bit_depth: u8,
}

/// Runtime parameters for the configurable codecs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodecParams {
    /// Reduced bit depth `q'` for the requant codec.
    pub requant_bits: Option<u8>,
    /// Command templates for the external codec.
    pub external: Option<ExternalCodec>,
}

/// External codec configuration.
///
/// Templates are run through `sh -c` with `{input}`, `{output}`, `{width}`,
/// `{height}` and `{bitdepth}` substituted. The encode command must read the
/// raw sample serialization from `{input}` and write the payload to
/// `{output}`; the decode command is the exact inverse. At most `slots`
/// processes run concurrently (default 1).
#[derive(Debug, Clone)]
pub struct ExternalCodec {
    pub encode_template: String,
    pub decode_template: String,
    gate: Arc<Semaphore>,
}

impl ExternalCodec {
    pub fn new(encode_template: String, decode_template: String) -> Self {
        Self::with_slots(encode_template, decode_template, 1)
    }

    pub fn with_slots(encode_template: String, decode_template: String, slots: usize) -> Self {
        Self {
            encode_template,
            decode_template,
            gate: Arc::new(Semaphore::new(slots.max(1))),
        }
    }
}

impl PartialEq for ExternalCodec {
    fn eq(&self, other: &Self) -> bool {
        self.encode_template == other.encode_template
            && self.decode_template == other.decode_template
    }
}

#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.available.notify_one();
    }
}

/// Encode one quantized frame with the selected codec.
pub fn encode_frame(frame: &QuantFrame, codec_id: u8, params: &CodecParams) -> Result<CodecPayload> {
    let frame_bytes = match codec_id {
        CODEC_RAW => serialize_samples(frame),
        CODEC_ZDEFLATE => {
            use std::io::Write;
            let raw = serialize_samples(frame);
            let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&raw)?;
            enc.finish()?
        }
        CODEC_REQUANT => requant_encode(frame, params)?,
        CODEC_EXTERNAL => {
            let ext = params.external.as_ref().ok_or_else(|| {
                Error::InvalidInput("external codec selected without command templates".into())
            })?;
            let raw = serialize_samples(frame);
            run_external(
                ext,
                &ext.encode_template,
                &raw,
                FrameGeometry {
                    height: frame.height(),
                    width: frame.width(),
                    bit_depth: frame.bit_depth(),
                },
            )?
        }
        other => return Err(Error::UnknownCodec(other)),
    };
    Ok(CodecPayload { codec_id, frame_bytes })
}

/// Decode one payload back into a quantized frame of the given geometry.
pub fn decode_frame(
    payload: &CodecPayload,
    geometry: FrameGeometry,
    params: &CodecParams,
) -> Result<QuantFrame> {
    match payload.codec_id {
        CODEC_RAW => deserialize_samples(
            &payload.frame_bytes,
            geometry.height,
            geometry.width,
            geometry.bit_depth,
        ),
        CODEC_ZDEFLATE => {
            let mut raw = Vec::new();
            ZlibDecoder::new(payload.frame_bytes.as_slice())
                .read_to_end(&mut raw)
                .map_err(|e| Error::DecodeError(format!("zlib inflate failed: {e}")))?;
            deserialize_samples(&raw, geometry.height, geometry.width, geometry.bit_depth)
        }
        CODEC_REQUANT => requant_decode(&payload.frame_bytes, geometry),
        CODEC_EXTERNAL => {
            let ext = params.external.as_ref().ok_or_else(|| {
                Error::InvalidInput("external codec payload without command templates".into())
            })?;
            let raw = run_external(ext, &ext.decode_template, &payload.frame_bytes, geometry)?;
            deserialize_samples(&raw, geometry.height, geometry.width, geometry.bit_depth)
        }
        other => Err(Error::UnknownCodec(other)),
    }
}

fn requant_encode(frame: &QuantFrame, params: &CodecParams) -> Result<Vec<u8>> {
    let reduced = params.requant_bits.ok_or_else(|| {
        Error::InvalidInput("requant codec needs a reduced bit depth parameter".into())
    })?;
    if reduced == 0 || reduced > frame.bit_depth() {
        return Err(Error::InvalidInput(format!(
            "requant depth {reduced} must be in 1..={}",
            frame.bit_depth()
        )));
    }
    let from_levels = ((1u32 << frame.bit_depth()) - 1) as f64;
    let to_levels = ((1u32 << reduced) - 1) as f64;
    let data: Vec<u16> = frame
        .data()
        .iter()
        .map(|&s| (s as f64 / from_levels * to_levels).round() as u16)
        .collect();
    let reduced_frame = QuantFrame::new(frame.height(), frame.width(), reduced, data)?;
    let mut out = Vec::with_capacity(1 + reduced_frame.data().len() * 2);
    out.push(reduced);
    out.extend_from_slice(&serialize_samples(&reduced_frame));
    Ok(out)
}

fn requant_decode(bytes: &[u8], geometry: FrameGeometry) -> Result<QuantFrame> {
    let (&reduced, body) = bytes
        .split_first()
        .ok_or_else(|| Error::DecodeError("requant payload is empty".into()))?;
    if reduced == 0 || reduced > geometry.bit_depth {
        return Err(Error::DecodeError(format!(
            "requant depth {reduced} out of range for {}-bit frames",
            geometry.bit_depth
        )));
    }
    let reduced_frame = deserialize_samples(body, geometry.height, geometry.width, reduced)?;
    let from_levels = ((1u32 << reduced) - 1) as f64;
    let to_levels = ((1u32 << geometry.bit_depth) - 1) as f64;
    let data: Vec<u16> = reduced_frame
        .data()
        .iter()
        .map(|&s| (s as f64 / from_levels * to_levels).round() as u16)
        .collect();
    QuantFrame::new(geometry.height, geometry.width, geometry.bit_depth, data)
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn run_external(
    ext: &ExternalCodec,
    template: &str,
    input: &[u8],
    geometry: FrameGeometry,
) -> Result<Vec<u8>> {
    let _slot = ext.gate.acquire();
    let tag = format!(
        "fcms-{}-{}",
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let dir = std::env::temp_dir();
    let input_path = dir.join(format!("{tag}.in"));
    let output_path = dir.join(format!("{tag}.out"));
    let command = template
        .replace("{input}", &input_path.to_string_lossy())
        .replace("{output}", &output_path.to_string_lossy())
        .replace("{width}", &geometry.width.to_string())
        .replace("{height}", &geometry.height.to_string())
        .replace("{bitdepth}", &geometry.bit_depth.to_string());

    let result = (|| {
        std::fs::write(&input_path, input)
            .map_err(|e| Error::ExternalCodecError(format!("writing {input_path:?}: {e}")))?;
        let output = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .output()
            .map_err(|e| Error::ExternalCodecError(format!("spawning `{command}`: {e}")))?;
        if !output.status.success() {
            return Err(Error::ExternalCodecError(format!(
                "`{command}` exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        std::fs::read(&output_path).map_err(|e| {
            Error::ExternalCodecError(format!("`{command}` produced no output: {e}"))
        })
    })();

    let _ = std::fs::remove_file(&input_path);
    let _ = std::fs::remove_file(&output_path);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(bit_depth: u8) -> QuantFrame {
        let levels = (1u32 << bit_depth) - 1;
        let data: Vec<u16> = (0..64u32).map(|i| ((i * 37) % (levels + 1)) as u16).collect();
        QuantFrame::new(8, 8, bit_depth, data).unwrap()
    }

    fn geometry(bit_depth: u8) -> FrameGeometry {
        FrameGeometry { height: 8, width: 8, bit_depth }
    }

    #[test]
    fn raw_round_trip() {
        let f = frame(10);
        let p = encode_frame(&f, CODEC_RAW, &CodecParams::default()).unwrap();
        assert_eq!(p.byte_count(), 128);
        let back = decode_frame(&p, geometry(10), &CodecParams::default()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn zdeflate_round_trip() {
        let f = frame(10);
        let p = encode_frame(&f, CODEC_ZDEFLATE, &CodecParams::default()).unwrap();
        let back = decode_frame(&p, geometry(10), &CodecParams::default()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn requant_at_equal_depth_is_lossless() {
        let f = frame(10);
        let params = CodecParams { requant_bits: Some(10), ..Default::default() };
        let p = encode_frame(&f, CODEC_REQUANT, &params).unwrap();
        let back = decode_frame(&p, geometry(10), &params).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn requant_error_bound_over_all_levels() {
        // Every 10-bit level through a q' = 8 round trip.
        let data: Vec<u16> = (0..1024).collect();
        let f = QuantFrame::new(32, 32, 10, data).unwrap();
        let params = CodecParams { requant_bits: Some(8), ..Default::default() };
        let p = encode_frame(&f, CODEC_REQUANT, &params).unwrap();
        let back = decode_frame(&p, geometry_32(), &params).unwrap();
        for (&x, &y) in f.data().iter().zip(back.data()) {
            let err = (x as i32 - y as i32).unsigned_abs();
            assert!(err <= 4, "level {x} reconstructed as {y}");
        }
    }

    fn geometry_32() -> FrameGeometry {
        FrameGeometry { height: 32, width: 32, bit_depth: 10 }
    }

    #[test]
    fn requant_payload_carries_reduced_samples() {
        let f = frame(10);
        let params = CodecParams { requant_bits: Some(8), ..Default::default() };
        let p = encode_frame(&f, CODEC_REQUANT, &params).unwrap();
        // One depth byte plus one byte per sample at q' = 8.
        assert_eq!(p.byte_count(), 1 + 64);
    }

    #[test]
    fn requant_needs_a_parameter() {
        let f = frame(10);
        let err = encode_frame(&f, CODEC_REQUANT, &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
        let params = CodecParams { requant_bits: Some(12), ..Default::default() };
        let err = encode_frame(&f, CODEC_REQUANT, &params).unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
    }

    #[test]
    fn unknown_codec_is_rejected() {
        let f = frame(8);
        let err = encode_frame(&f, 9, &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "UnknownCodec");
        let p = CodecPayload { codec_id: 9, frame_bytes: vec![] };
        let err = decode_frame(&p, geometry(8), &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "UnknownCodec");
    }

    #[test]
    fn corrupt_payloads_yield_decode_errors() {
        let p = CodecPayload { codec_id: CODEC_ZDEFLATE, frame_bytes: vec![1, 2, 3] };
        let err = decode_frame(&p, geometry(8), &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "DecodeError");

        let p = CodecPayload { codec_id: CODEC_RAW, frame_bytes: vec![0; 3] };
        let err = decode_frame(&p, geometry(8), &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "DecodeError");

        let p = CodecPayload { codec_id: CODEC_REQUANT, frame_bytes: vec![] };
        let err = decode_frame(&p, geometry(8), &CodecParams::default()).unwrap_err();
        assert_eq!(err.category(), "DecodeError");
    }

    fn shell_available() -> bool {
        Command::new("sh")
            .arg("-c")
            .arg("true")
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }

    #[test]
    fn external_codec_round_trip() {
        if !shell_available() {
            eprintln!("skipping: no shell available for the external codec");
            return;
        }
        // `cat` as a trivially lossless external codec.
        let ext = ExternalCodec::new(
            "cat {input} > {output}".into(),
            "cat {input} > {output}".into(),
        );
        let params = CodecParams { requant_bits: None, external: Some(ext) };
        let f = frame(10);
        let p = encode_frame(&f, CODEC_EXTERNAL, &params).unwrap();
        let back = decode_frame(&p, geometry(10), &params).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn external_codec_failure_is_reported() {
        if !shell_available() {
            eprintln!("skipping: no shell available for the external codec");
            return;
        }
        let ext = ExternalCodec::new(
            "echo boom >&2; false".into(),
            "echo boom >&2; false".into(),
        );
        let params = CodecParams { requant_bits: None, external: Some(ext) };
        let err = encode_frame(&frame(8), CODEC_EXTERNAL, &params).unwrap_err();
        assert_eq!(err.category(), "ExternalCodecError");
        assert!(err.to_string().contains("boom"));
    }
}
