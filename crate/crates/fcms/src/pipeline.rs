//! End-to-end encoder and decoder across all signaling modes.
//!
//! Encoding order: temporal downsample, then per coded frame fuse, pack,
//! min-max quantize and inner-codec encode, with one statistics segment
//! computed from the first frame of every refresh period. The encoder always
//! min-max normalizes before quantization; outside baseline mode the
//! extremes are used and then deliberately discarded rather than signaled.
//!
//! Decoding order: demux, inner-codec decode, dequantize (baseline applies
//! inverse min-max, the other modes divide by `2^q − 1` only), unpack, in
//! full mode rescale the fused tensor, restore the multi-scale set, rescale
//! per tensor (full) or with the shared pooled map (simplified), and finally
//! upsample temporally.

use crate::bitstream::{demux, mux, FrameRecord, PeriodRecord, Stream, StreamHeader};
use crate::codec::{codec_known, decode_frame, encode_frame, CodecParams, FrameGeometry, CODEC_EXTERNAL, CODEC_REQUANT};
use crate::fusion::{fuse, fused_shape, restore, FusionKind};
use crate::packing::{dequantize_baseline, dequantize_proposed, pack, quantize, tiling_for};
use crate::rescale::{rescale_fused, rescale_per_tensor, rescale_simplified};
use crate::stats::{refresh_schedule, StatsMode, StatsParams};
use crate::temporal::{downsample, upsample};
use crate::tensor::{compute_data_stats, compute_stats, pooled_sum_stats, FeatureSet, TensorStats};
use crate::{Error, Result};

/// Encoder configuration. Every field is also a CLI flag and a key in the
/// plain-text config file format of [`EncodeConfig::from_kv_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    pub mode: StatsMode,
    pub bit_depth: u8,
    pub refresh_period: u16,
    pub codec_id: u8,
    pub codec_params: CodecParams,
    pub temporal: bool,
    pub fps_num: u16,
    pub fps_den: u16,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            mode: StatsMode::Full,
            bit_depth: 10,
            refresh_period: 1,
            codec_id: 0,
            codec_params: CodecParams::default(),
            temporal: false,
            fps_num: 30,
            fps_den: 1,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(Error::InvalidInput(format!(
                "bit depth {} outside 1..=16",
                self.bit_depth
            )));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidInput("refresh period must be at least 1".into()));
        }
        if self.fps_den == 0 {
            return Err(Error::InvalidInput("fps denominator must be at least 1".into()));
        }
        if !codec_known(self.codec_id) {
            return Err(Error::UnknownCodec(self.codec_id));
        }
        if self.codec_id == CODEC_REQUANT {
            match self.codec_params.requant_bits {
                None => {
                    return Err(Error::InvalidInput(
                        "requant codec needs codec-param = reduced bit depth".into(),
                    ));
                }
                Some(r) if r == 0 || r > self.bit_depth => {
                    return Err(Error::InvalidInput(format!(
                        "codec-param {r} must be in 1..={}",
                        self.bit_depth
                    )));
                }
                Some(_) => {}
            }
        }
        if self.codec_id == CODEC_EXTERNAL && self.codec_params.external.is_none() {
            return Err(Error::InvalidInput(
                "external codec needs encode and decode command templates".into(),
            ));
        }
        Ok(())
    }

    /// Parse a plain-text `key = value` configuration. Lines starting with
    /// `#` and blank lines are ignored. Unknown keys are rejected.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut external_encode: Option<String> = None;
        let mut external_decode: Option<String> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::InvalidInput(format!("config line {}: {what} `{value}`", lineno + 1))
            };
            match key {
                "mode" => {
                    config.mode = parse_mode(value)
                        .ok_or_else(|| bad("unknown mode"))?;
                }
                "q" => config.bit_depth = value.parse().map_err(|_| bad("bad bit depth"))?,
                "refresh" => {
                    config.refresh_period = value.parse().map_err(|_| bad("bad refresh period"))?;
                }
                "codec" => config.codec_id = value.parse().map_err(|_| bad("bad codec id"))?,
                "codec-param" => {
                    config.codec_params.requant_bits =
                        Some(value.parse().map_err(|_| bad("bad codec parameter"))?);
                }
                "temporal" => {
                    config.temporal = match value {
                        "true" | "1" | "on" => true,
                        "false" | "0" | "off" => false,
                        _ => return Err(bad("bad temporal flag")),
                    };
                }
                "fps" => {
                    let (num, den) = parse_fps(value).ok_or_else(|| bad("bad fps"))?;
                    config.fps_num = num;
                    config.fps_den = den;
                }
                "external-encode" => external_encode = Some(value.to_string()),
                "external-decode" => external_decode = Some(value.to_string()),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "config line {}: unknown key `{other}`",
                        lineno + 1
                    )));
                }
            }
        }
        if let (Some(enc), Some(dec)) = (&external_encode, &external_decode) {
            config.codec_params.external =
                Some(crate::codec::ExternalCodec::new(enc.clone(), dec.clone()));
        } else if external_encode.is_some() || external_decode.is_some() {
            return Err(Error::InvalidInput(
                "external-encode and external-decode must be given together".into(),
            ));
        }
        Ok(config)
    }

    /// One-line `key=value` rendering of the effective configuration.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "mode={} q={} refresh={} codec={} temporal={} fps={}/{}",
            mode_name(self.mode),
            self.bit_depth,
            self.refresh_period,
            self.codec_id,
            self.temporal,
            self.fps_num,
            self.fps_den
        );
        if let Some(r) = self.codec_params.requant_bits {
            s.push_str(&format!(" codec-param={r}"));
        }
        if self.codec_params.external.is_some() {
            s.push_str(" external=yes");
        }
        s
    }
}

pub fn parse_mode(value: &str) -> Option<StatsMode> {
    match value {
        "baseline" | "0" => Some(StatsMode::Baseline),
        "full" | "1" => Some(StatsMode::Full),
        "simplified" | "2" => Some(StatsMode::Simplified),
        _ => None,
    }
}

pub fn mode_name(mode: StatsMode) -> &'static str {
    match mode {
        StatsMode::Baseline => "baseline",
        StatsMode::Full => "full",
        StatsMode::Simplified => "simplified",
    }
}

/// Parse `"30"` or `"30000/1001"` into an fps fraction.
pub fn parse_fps(value: &str) -> Option<(u16, u16)> {
    if let Some((num, den)) = value.split_once('/') {
        Some((num.trim().parse().ok()?, den.trim().parse().ok()?))
    } else {
        Some((value.parse().ok()?, 1))
    }
}

/// Encode a sequence into an FCMS stream.
///
/// All frames must share one shape spec. The output is deterministic: the
/// same sequence and configuration always produce byte-identical streams.
pub fn encode(seq: &[FeatureSet], config: &EncodeConfig) -> Result<Vec<u8>> {
    config.validate()?;
    if seq.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty sequence".into()));
    }
    let spec = seq[0].shape_spec();
    for (i, frame) in seq.iter().enumerate() {
        if frame.shape_spec() != spec {
            return Err(Error::InvalidInput(format!(
                "frame {i} does not match the shapes of frame 0"
            )));
        }
    }
    let fused_shape = fused_shape(&spec)?;

    let (kept, _) = downsample(seq, config.temporal);
    let mut periods: Vec<PeriodRecord> = Vec::new();
    for (coded_index, frame) in kept.iter().enumerate() {
        let fused = fuse(frame)?;
        if refresh_schedule(coded_index as u32, config.refresh_period) {
            let stats = match config.mode {
                StatsMode::Baseline => StatsParams::Baseline,
                StatsMode::Full => StatsParams::Full {
                    per_tensor: frame.tensors().iter().map(compute_stats).collect(),
                    fused: compute_data_stats(fused.data())?,
                },
                StatsMode::Simplified => {
                    let per_tensor: Vec<TensorStats> =
                        frame.tensors().iter().map(compute_stats).collect();
                    StatsParams::Simplified { pooled: pooled_sum_stats(&per_tensor)? }
                }
            };
            periods.push(PeriodRecord { stats, frames: Vec::new() });
        }
        let packed = pack(&fused);
        let (quant, min_max) = quantize(&packed, config.bit_depth)?;
        let payload = encode_frame(&quant, config.codec_id, &config.codec_params)?;
        periods
            .last_mut()
            .expect("refresh at coded frame 0 opened a period")
            .frames
            .push(FrameRecord {
                min_max: (config.mode == StatsMode::Baseline).then_some(min_max),
                payload,
            });
    }

    let header = StreamHeader {
        mode: config.mode,
        bit_depth: config.bit_depth,
        refresh_period: config.refresh_period,
        fusion_id: FusionKind::for_spec(&spec).id(),
        codec_id: config.codec_id,
        temporal: config.temporal,
        frame_count: seq.len() as u32,
        tensor_shapes: spec.shapes().to_vec(),
        fused_shape,
        fps_num: config.fps_num,
        fps_den: config.fps_den,
    };
    mux(&Stream { header, periods })
}

/// Decode an FCMS stream produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Vec<FeatureSet>> {
    decode_with_params(bytes, &CodecParams::default())
}

/// Decode with explicit codec parameters (required for the external codec,
/// whose decode command is configuration, not stream content).
pub fn decode_with_params(bytes: &[u8], codec_params: &CodecParams) -> Result<Vec<FeatureSet>> {
    let stream = demux(bytes)?;
    let header = &stream.header;
    let spec = header.shape_spec().map_err(|e| {
        Error::CorruptStream(format!("header shape table is unusable: {e}"))
    })?;

    let expected_fused = fused_shape(&spec).map_err(|e| {
        Error::CorruptStream(format!("header shapes cannot be fused: {e}"))
    })?;
    if expected_fused != header.fused_shape {
        return Err(Error::CorruptStream(format!(
            "header fused shape {}x{}x{} does not match the tensor layout",
            header.fused_shape.channels, header.fused_shape.height, header.fused_shape.width
        )));
    }
    if FusionKind::from_id(header.fusion_id)? != FusionKind::for_spec(&spec) {
        return Err(Error::CorruptStream(format!(
            "fusion id {} does not match a {}-tensor layout",
            header.fusion_id,
            spec.tensor_count()
        )));
    }

    let tiling = tiling_for(
        header.fused_shape.channels,
        header.fused_shape.height,
        header.fused_shape.width,
    );
    let packed_height = tiling.rows as u64 * tiling.tile_height as u64;
    let packed_width = tiling.cols as u64 * tiling.tile_width as u64;
    if packed_height > u32::MAX as u64 || packed_width > u32::MAX as u64 {
        return Err(Error::CorruptStream(format!(
            "packed frame {packed_height}x{packed_width} is beyond the supported size"
        )));
    }
    let geometry = FrameGeometry {
        height: packed_height as u32,
        width: packed_width as u32,
        bit_depth: header.bit_depth,
    };

    let mut coded_sets = Vec::with_capacity(header.coded_frame_count() as usize);
    for period in &stream.periods {
        for frame in &period.frames {
            let quant = decode_frame(&frame.payload, geometry, codec_params)?;
            let packed = match header.mode {
                StatsMode::Baseline => {
                    let mm = frame.min_max.ok_or_else(|| {
                        Error::CorruptStream("baseline frame without min/max".into())
                    })?;
                    dequantize_baseline(&quant, mm, tiling)?
                }
                _ => dequantize_proposed(&quant, tiling)?,
            };
            let mut fused = crate::packing::unpack(&packed, header.fused_shape)?;
            if let StatsParams::Full { fused: fused_target, .. } = &period.stats {
                fused = rescale_fused(&fused, *fused_target);
            }
            let set = restore(&fused, &spec)?;
            let set = match &period.stats {
                StatsParams::Baseline => set,
                StatsParams::Full { per_tensor, .. } => rescale_per_tensor(&set, per_tensor)?,
                StatsParams::Simplified { pooled } => rescale_simplified(&set, *pooled)?,
            };
            let index = coded_sets.len() as u32;
            coded_sets.push(set.with_frame_index(index));
        }
    }

    if header.temporal {
        upsample(&coded_sets, header.frame_count)
    } else {
        Ok(coded_sets)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::accounting;
    use crate::synth::generate_sequence;
    use crate::tensor::{ShapeSpec, TensorShape};

    fn small_spec() -> ShapeSpec {
        ShapeSpec::new(vec![
            TensorShape::new(4, 8, 8),
            TensorShape::new(8, 4, 4),
        ])
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = EncodeConfig::default();
        assert!(c.validate().is_ok());
        c.bit_depth = 0;
        assert_eq!(c.validate().unwrap_err().category(), "InvalidInput");
        c = EncodeConfig { refresh_period: 0, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().category(), "InvalidInput");
        c = EncodeConfig { codec_id: 7, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().category(), "UnknownCodec");
        c = EncodeConfig { codec_id: CODEC_REQUANT, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().category(), "InvalidInput");
        c.codec_params.requant_bits = Some(8);
        assert!(c.validate().is_ok());
        c = EncodeConfig { codec_id: CODEC_EXTERNAL, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().category(), "InvalidInput");
    }

    #[test]
    fn config_file_round_trip() {
        let text = "
            # synthetic encode settings
            mode = simplified
            q = 12
            refresh = 8
            codec = 2
            codec-param = 6
            temporal = true
            fps = 60/2
        ";
        let c = EncodeConfig::from_kv_text(text).unwrap();
        assert_eq!(c.mode, StatsMode::Simplified);
        assert_eq!(c.bit_depth, 12);
        assert_eq!(c.refresh_period, 8);
        assert_eq!(c.codec_id, 2);
        assert_eq!(c.codec_params.requant_bits, Some(6));
        assert!(c.temporal);
        assert_eq!((c.fps_num, c.fps_den), (60, 2));

        let err = EncodeConfig::from_kv_text("bogus = 1").unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
        let err = EncodeConfig::from_kv_text("mode").unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
    }

    #[test]
    fn identity_chain_recovers_values_within_quantization_bound() {
        let spec = ShapeSpec::new(vec![TensorShape::new(8, 16, 16)]).unwrap();
        let seq = generate_sequence(&spec, 1, 3, 0.0);
        let config = EncodeConfig::default();
        let bytes = encode(&seq, &config).unwrap();
        let decoded = decode(&bytes).unwrap();

        let orig = seq[0].tensors()[0].data();
        let rec = decoded[0].tensors()[0].data();
        let min = orig.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let max = orig.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let bound = (max - min) / 1023.0;
        for (&x, &y) in orig.iter().zip(rec) {
            assert!((x as f64 - y as f64).abs() <= bound, "|{x} - {y}| > {bound}");
        }
        let orig_stats = compute_stats(&seq[0].tensors()[0]);
        let rec_stats = compute_stats(&decoded[0].tensors()[0]);
        assert!((orig_stats.mean - rec_stats.mean).abs() <= 1e-4 * orig_stats.mean.abs());
        assert!((orig_stats.std - rec_stats.std).abs() <= 1e-4 * orig_stats.std);
    }

    #[test]
    fn full_mode_stream_is_smaller_than_baseline_on_long_sequences() {
        let seq = generate_sequence(&small_spec(), 16, 5, 0.0);
        let full = encode(
            &seq,
            &EncodeConfig { refresh_period: 16, ..Default::default() },
        )
        .unwrap();
        let baseline = encode(
            &seq,
            &EncodeConfig { mode: StatsMode::Baseline, refresh_period: 16, ..Default::default() },
        )
        .unwrap();
        // 16 frames per period > N + 1 = 3, so full wins.
        assert!(full.len() < baseline.len());
        // Identical payload bytes: the difference is pure overhead.
        let rf = accounting(&full).unwrap();
        let rb = accounting(&baseline).unwrap();
        assert_eq!(rf.payload_bytes, rb.payload_bytes);
    }

    #[test]
    fn temporal_halves_payload_count_and_restores_length() {
        let seq = generate_sequence(&small_spec(), 10, 6, 0.05);
        let bytes = encode(
            &seq,
            &EncodeConfig { temporal: true, ..Default::default() },
        )
        .unwrap();
        let stream = demux(&bytes).unwrap();
        let payloads: usize = stream.periods.iter().map(|p| p.frames.len()).sum();
        assert_eq!(payloads, 5);
        let decoded = decode(&bytes).unwrap();
        assert_eq!(decoded.len(), 10);
        for (i, frame) in decoded.iter().enumerate() {
            assert_eq!(frame.frame_index(), i as u32);
            assert_eq!(frame.shape_spec(), seq[0].shape_spec());
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let seq = generate_sequence(&small_spec(), 4, 9, 0.01);
        for config in [
            EncodeConfig::default(),
            EncodeConfig { mode: StatsMode::Baseline, ..Default::default() },
            EncodeConfig { mode: StatsMode::Simplified, refresh_period: 2, ..Default::default() },
            EncodeConfig { codec_id: 1, ..Default::default() },
        ] {
            let a = encode(&seq, &config).unwrap();
            let b = encode(&seq, &config).unwrap();
            assert_eq!(a, b, "{}", config.summary());
        }
    }

    #[test]
    fn mixed_shape_sequences_are_rejected() {
        let mut seq = generate_sequence(&small_spec(), 1, 0, 0.0);
        seq.extend(generate_sequence(
            &ShapeSpec::new(vec![TensorShape::new(4, 8, 8)]).unwrap(),
            1,
            0,
            0.0,
        ));
        assert_eq!(
            encode(&seq, &EncodeConfig::default()).unwrap_err().category(),
            "InvalidInput"
        );
    }

    #[test]
    fn decode_restores_stats_per_mode() {
        let seq = generate_sequence(&small_spec(), 3, 11, 0.02);
        // Full mode: every tensor's stats within 1e-4 relative.
        let bytes = encode(&seq, &EncodeConfig::default()).unwrap();
        let decoded = decode(&bytes).unwrap();
        for (orig, rec) in seq.iter().zip(&decoded) {
            for (to, tr) in orig.tensors().iter().zip(rec.tensors()) {
                let so = compute_stats(to);
                let sr = compute_stats(tr);
                assert!((so.mean - sr.mean).abs() <= 1e-4 * so.mean.abs());
                assert!((so.std - sr.std).abs() <= 1e-4 * so.std);
            }
        }
        // Simplified mode: pooled stats within 2^-8 relative.
        let bytes = encode(
            &seq,
            &EncodeConfig { mode: StatsMode::Simplified, ..Default::default() },
        )
        .unwrap();
        let decoded = decode(&bytes).unwrap();
        let tol = 2.0f32.powi(-8);
        for (orig, rec) in seq.iter().zip(&decoded) {
            let po = pooled_sum_stats(
                &orig.tensors().iter().map(compute_stats).collect::<Vec<_>>(),
            )
            .unwrap();
            let pr = pooled_sum_stats(
                &rec.tensors().iter().map(compute_stats).collect::<Vec<_>>(),
            )
            .unwrap();
            assert!((po.mean - pr.mean).abs() <= tol * po.mean.abs());
            assert!((po.std - pr.std).abs() <= tol * po.std);
        }
    }
}
