//! Temporal downsampling and interpolation-based upsampling.
//!
//! Downsampling keeps every even-indexed frame. Upsampling rebuilds a
//! dropped frame as the element-wise average of its two reconstructed
//! neighbours; a trailing dropped frame (odd position at the end) duplicates
//! the last kept frame. Kept frames pass through bit-exactly.

use crate::tensor::{FeatureSet, FeatureTensor};
use crate::{Error, Result};

/// Drop every other frame when enabled. Returns the kept frames and their
/// original indices.
pub fn downsample(seq: &[FeatureSet], enabled: bool) -> (Vec<FeatureSet>, Vec<u32>) {
    if !enabled {
        return (seq.to_vec(), (0..seq.len() as u32).collect());
    }
    let kept: Vec<FeatureSet> = seq.iter().step_by(2).cloned().collect();
    let indices = (0..seq.len() as u32).step_by(2).collect();
    (kept, indices)
}

/// Number of frames [`downsample`] keeps out of `original_count`.
pub fn kept_count(original_count: u32, enabled: bool) -> u32 {
    if enabled {
        original_count.div_ceil(2)
    } else {
        original_count
    }
}

fn average(a: &FeatureSet, b: &FeatureSet, frame_index: u32) -> Result<FeatureSet> {
    let tensors = a
        .tensors()
        .iter()
        .zip(b.tensors())
        .map(|(ta, tb)| {
            if ta.shape() != tb.shape() {
                return Err(Error::InvalidInput("frame shapes differ across the sequence".into()));
            }
            let data: Vec<f32> = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| ((x as f64 + y as f64) * 0.5) as f32)
                .collect();
            FeatureTensor::new(ta.shape(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(tensors, frame_index)
}

/// Rebuild a sequence of `original_count` frames from the kept frames.
///
/// `kept` must hold exactly `ceil(original_count / 2)` frames (the output of
/// [`downsample`] with temporal coding enabled).
pub fn upsample(kept: &[FeatureSet], original_count: u32) -> Result<Vec<FeatureSet>> {
    if kept.is_empty() {
        return Err(Error::InvalidInput("cannot upsample an empty sequence".into()));
    }
    if kept.len() as u32 != original_count.div_ceil(2) {
        return Err(Error::InvalidInput(format!(
            "{} kept frames cannot reproduce {original_count} original frames",
            kept.len()
        )));
    }
    let mut out = Vec::with_capacity(original_count as usize);
    for index in 0..original_count {
        let k = (index / 2) as usize;
        if index % 2 == 0 {
            out.push(kept[k].clone().with_frame_index(index));
        } else if k + 1 < kept.len() {
            out.push(average(&kept[k], &kept[k + 1], index)?);
        } else {
            // Trailing dropped frame: duplicate the last kept frame.
            out.push(kept[k].clone().with_frame_index(index));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_sequence;
    use crate::tensor::{ShapeSpec, TensorShape};

    fn constant_frame(value: f32, index: u32) -> FeatureSet {
        let t = FeatureTensor::constant(TensorShape::new(1, 2, 2), value).unwrap();
        FeatureSet::new(vec![t], index).unwrap()
    }

    #[test]
    fn disabled_is_identity() {
        let spec = ShapeSpec::new(vec![TensorShape::new(1, 2, 2)]).unwrap();
        let seq = generate_sequence(&spec, 4, 3, 0.0);
        let (kept, indices) = downsample(&seq, false);
        assert_eq!(kept, seq);
        assert_eq!(indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn enabled_keeps_even_frames() {
        let spec = ShapeSpec::new(vec![TensorShape::new(1, 2, 2)]).unwrap();
        let seq = generate_sequence(&spec, 5, 3, 0.0);
        let (kept, indices) = downsample(&seq, true);
        assert_eq!(indices, vec![0, 2, 4]);
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[1], seq[2]);

        let single = downsample(&seq[..1], true);
        assert_eq!(single.1, vec![0]);
    }

    #[test]
    fn midpoint_interpolation() {
        let kept = vec![constant_frame(1.0, 0), constant_frame(3.0, 2)];
        let out = upsample(&kept, 3).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out[1].tensors()[0].data().iter().all(|&v| v == 2.0));
        assert_eq!(out[0].tensors(), kept[0].tensors());
        assert_eq!(out[2].tensors(), kept[1].tensors());
    }

    #[test]
    fn trailing_frame_is_duplicated() {
        let kept = vec![constant_frame(1.0, 0), constant_frame(3.0, 2)];
        let out = upsample(&kept, 4).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out[1].tensors()[0].data().iter().all(|&v| v == 2.0));
        assert_eq!(out[3].tensors(), kept[1].tensors());
        assert_eq!(out[3].frame_index(), 3);
    }

    #[test]
    fn affine_sequences_reconstruct_exactly() {
        // Values linear in t with exactly representable coefficients, so the
        // midpoint average equals the true intermediate frame bit-for-bit.
        let shape = TensorShape::new(2, 4, 4);
        let frames: Vec<FeatureSet> = (0..6u32)
            .map(|t| {
                let data: Vec<f32> = (0..shape.element_count())
                    .map(|i| 0.25 * i as f32 + 0.5 * t as f32)
                    .collect();
                FeatureSet::new(vec![FeatureTensor::new(shape, data).unwrap()], t).unwrap()
            })
            .collect();
        let (kept, _) = downsample(&frames, true);
        let out = upsample(&kept, 6).unwrap();
        for (t, frame) in out.iter().enumerate().take(5) {
            assert_eq!(frame.tensors(), frames[t].tensors(), "frame {t}");
        }
        // Frame 5 is the trailing duplicate of frame 4.
        assert_eq!(out[5].tensors(), frames[4].tensors());
    }

    #[test]
    fn interpolated_frames_lie_between_neighbours() {
        let spec = ShapeSpec::new(vec![TensorShape::new(2, 8, 8)]).unwrap();
        let seq = generate_sequence(&spec, 5, 9, 0.2);
        let (kept, _) = downsample(&seq, true);
        let out = upsample(&kept, 5).unwrap();
        assert_eq!(out.len(), 5);
        for k in [1usize, 3] {
            let lo = out[k - 1].tensors()[0].data();
            let hi = out[k + 1].tensors()[0].data();
            for ((&a, &b), &m) in lo.iter().zip(hi).zip(out[k].tensors()[0].data()) {
                assert!(m >= a.min(b) && m <= a.max(b));
            }
        }
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let kept = vec![constant_frame(1.0, 0)];
        assert_eq!(upsample(&kept, 4).unwrap_err().category(), "InvalidInput");
        assert_eq!(upsample(&[], 1).unwrap_err().category(), "InvalidInput");
        assert_eq!(upsample(&kept, 2).unwrap().len(), 2);
        assert_eq!(upsample(&kept, 1).unwrap().len(), 1);
    }
}
