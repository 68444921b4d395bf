//! FTNS: the raw feature-sequence file format.
//!
//! Layout, all multi-byte integers little-endian:
//!
//! ```text
//! magic   4 bytes  "FTNS"
//! version u8       1
//! N       u8       tensor count per frame
//! shapes  N x (C u32, H u32, W u32)
//! frames  u32      frame count
//! payload frames x tensors, raw binary32 little-endian, channel-major
//! ```

use std::io::{self, Read, Write};

use crate::tensor::{FeatureSet, FeatureTensor, ShapeSpec, TensorShape};
use crate::{Error, Result};

pub const FTNS_MAGIC: [u8; 4] = *b"FTNS";
pub const FTNS_VERSION: u8 = 1;

/// Write a sequence as FTNS. All frames must share one shape spec.
pub fn write_ftns<W: Write>(mut w: W, frames: &[FeatureSet]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty sequence".into()));
    }
    let spec = frames[0].shape_spec();
    for (i, frame) in frames.iter().enumerate() {
        if frame.shape_spec() != spec {
            return Err(Error::InvalidInput(format!(
                "frame {i} does not match the shapes of frame 0"
            )));
        }
    }
    if frames.len() > u32::MAX as usize {
        return Err(Error::InvalidInput("too many frames for a u32 count".into()));
    }

    w.write_all(&FTNS_MAGIC)?;
    w.write_all(&[FTNS_VERSION, spec.tensor_count() as u8])?;
    for shape in spec.shapes() {
        w.write_all(&shape.channels.to_le_bytes())?;
        w.write_all(&shape.height.to_le_bytes())?;
        w.write_all(&shape.width.to_le_bytes())?;
    }
    w.write_all(&(frames.len() as u32).to_le_bytes())?;
    for frame in frames {
        for tensor in frame.tensors() {
            let mut buf = Vec::with_capacity(tensor.element_count() * 4);
            for v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

/// Read an FTNS sequence. Frame indices are assigned in file order.
pub fn read_ftns<R: Read>(mut r: R) -> Result<Vec<FeatureSet>> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != FTNS_MAGIC {
        return Err(Error::NotAStream(format!("bad FTNS magic {magic:02x?}")));
    }
    let mut head = [0u8; 2];
    read_exact(&mut r, &mut head, "version and tensor count")?;
    if head[0] != FTNS_VERSION {
        return Err(Error::CorruptStream(format!("unsupported FTNS version {}", head[0])));
    }
    let tensor_count = head[1] as usize;
    if tensor_count == 0 {
        return Err(Error::CorruptStream("FTNS tensor count is zero".into()));
    }

    let mut shapes = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let c = read_u32(&mut r, "channel count")?;
        let h = read_u32(&mut r, "height")?;
        let w = read_u32(&mut r, "width")?;
        let shape = TensorShape::new(c, h, w);
        if shape.element_count() > u32::MAX as usize {
            return Err(Error::CorruptStream(format!(
                "tensor shape {c}x{h}x{w} is beyond the supported size"
            )));
        }
        shapes.push(shape);
    }
    let spec = ShapeSpec::new(shapes)
        .map_err(|e| Error::CorruptStream(format!("invalid FTNS shape table: {e}")))?;
    let frame_count = read_u32(&mut r, "frame count")?;
    if frame_count == 0 {
        return Err(Error::CorruptStream("FTNS frame count is zero".into()));
    }

    let mut frames = Vec::new();
    for index in 0..frame_count {
        let mut tensors = Vec::with_capacity(spec.tensor_count());
        for &shape in spec.shapes() {
            tensors.push(FeatureTensor::new(shape, read_payload(&mut r, shape)?)?);
        }
        frames.push(FeatureSet::new(tensors, index)?);
    }
    Ok(frames)
}

// Read in bounded chunks so a crafted header cannot force a huge upfront
// allocation: memory grows only as file bytes actually arrive.
fn read_payload<R: Read>(r: &mut R, shape: TensorShape) -> Result<Vec<f32>> {
    const CHUNK: usize = 1 << 20;
    let mut remaining = shape.element_count() * 4;
    let mut data = Vec::new();
    let mut buf = vec![0u8; CHUNK.min(remaining)];
    while remaining > 0 {
        let take = CHUNK.min(remaining);
        read_exact(r, &mut buf[..take], "tensor payload")?;
        data.extend(
            buf[..take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        remaining -= take;
    }
    Ok(data)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::TruncatedStream(format!("FTNS ended while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_sequence;

    fn sample() -> Vec<FeatureSet> {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(2, 3, 4),
            TensorShape::new(4, 3, 2),
        ])
        .unwrap();
        generate_sequence(&spec, 3, 5, 0.1)
    }

    #[test]
    fn round_trip() {
        let frames = sample();
        let mut bytes = Vec::new();
        write_ftns(&mut bytes, &frames).unwrap();
        let back = read_ftns(bytes.as_slice()).unwrap();
        assert_eq!(frames, back);
    }

    #[test]
    fn header_layout() {
        let frames = sample();
        let mut bytes = Vec::new();
        write_ftns(&mut bytes, &frames).unwrap();
        assert_eq!(&bytes[0..4], b"FTNS");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        // 2 shape entries of 12 bytes each, then the frame count.
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[30..34].try_into().unwrap()), 3);
        let payload = 3 * (2 * 3 * 4 + 4 * 3 * 2) * 4;
        assert_eq!(bytes.len(), 34 + payload);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let frames = sample();
        let mut bytes = Vec::new();
        write_ftns(&mut bytes, &frames).unwrap();

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert_eq!(read_ftns(wrong.as_slice()).unwrap_err().category(), "NotAStream");

        for cut in [3, 5, 12, 33, bytes.len() - 1] {
            let err = read_ftns(&bytes[..cut]).unwrap_err();
            assert_eq!(err.category(), "TruncatedStream", "cut at {cut}");
        }
    }

    #[test]
    fn mixed_shapes_rejected() {
        let spec_a = ShapeSpec::new(vec![TensorShape::new(1, 2, 2)]).unwrap();
        let spec_b = ShapeSpec::new(vec![TensorShape::new(1, 2, 3)]).unwrap();
        let mut frames = generate_sequence(&spec_a, 1, 0, 0.0);
        frames.extend(generate_sequence(&spec_b, 1, 0, 0.0));
        let err = write_ftns(Vec::new(), &frames).unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
    }
}
