//! Deterministic synthetic feature sequences.
//!
//! The generator draws approximately normal values around per-tensor target
//! statistics, with an optional linear drift of those targets across frames.
//! It is self-contained on purpose: only integer arithmetic plus IEEE-754
//! add/mul/div are used, so a given seed produces bit-identical sequences on
//! every platform.

use crate::tensor::{FeatureSet, FeatureTensor, ShapeSpec, TensorStats};

/// SplitMix64 generator with a uniform-sum Gaussian approximation.
#[derive(Debug, Clone)]
pub struct SequenceRng {
    state: u64,
}

impl SequenceRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard-normal approximation: sum of twelve uniforms minus six.
    ///
    /// Mean 0, variance exactly 1, support [-6, 6]. Avoids transcendental
    /// functions whose rounding may differ between platforms.
    pub fn next_gaussian(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.next_f64();
        }
        acc - 6.0
    }
}

/// Per-tensor target statistics for every frame, derived from the seed.
///
/// Base means have magnitude in `[0.25, 2.0]` with random sign; base standard
/// deviations lie in `[0.5, 2.0]`. Frame `t` shifts both by `drift·t`, with
/// the standard deviation floored at `0.05`.
pub fn sequence_targets(
    spec: &ShapeSpec,
    frames: u32,
    seed: u64,
    drift: f32,
) -> Vec<Vec<TensorStats>> {
    let mut rng = SequenceRng::new(seed);
    let base: Vec<(f64, f64)> = spec
        .shapes()
        .iter()
        .map(|_| {
            let magnitude = 0.25 + 1.75 * rng.next_f64();
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            let std = 0.5 + 1.5 * rng.next_f64();
            (sign * magnitude, std)
        })
        .collect();
    (0..frames)
        .map(|t| {
            base.iter()
                .map(|&(mean, std)| {
                    let shift = drift as f64 * t as f64;
                    TensorStats::new((mean + shift) as f32, (std + shift).max(0.05) as f32)
                })
                .collect()
        })
        .collect()
}

/// Generate `frames` feature sets with the targets of [`sequence_targets`],
/// returning both the frames and the targets.
pub fn generate_sequence_with_targets(
    spec: &ShapeSpec,
    frames: u32,
    seed: u64,
    drift: f32,
) -> (Vec<FeatureSet>, Vec<Vec<TensorStats>>) {
    let targets = sequence_targets(spec, frames, seed, drift);
    // Separate stream so target draws do not shift the sample stream.
    let mut rng = SequenceRng::new(seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let sets = targets
        .iter()
        .enumerate()
        .map(|(t, frame_targets)| {
            let tensors = spec
                .shapes()
                .iter()
                .zip(frame_targets)
                .map(|(&shape, stats)| {
                    let mean = stats.mean as f64;
                    let std = stats.std as f64;
                    let data: Vec<f32> = (0..shape.element_count())
                        .map(|_| (mean + std * rng.next_gaussian()) as f32)
                        .collect();
                    FeatureTensor::new(shape, data).expect("generated data matches shape")
                })
                .collect();
            FeatureSet::new(tensors, t as u32).expect("spec has at least one tensor")
        })
        .collect();
    (sets, targets)
}

/// Generate a deterministic synthetic sequence.
pub fn generate_sequence(spec: &ShapeSpec, frames: u32, seed: u64, drift: f32) -> Vec<FeatureSet> {
    generate_sequence_with_targets(spec, frames, seed, drift).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{compute_stats, TensorShape};

    #[test]
    fn deterministic_for_equal_seeds() {
        let spec = ShapeSpec::new(vec![TensorShape::new(4, 8, 8), TensorShape::new(8, 4, 4)])
            .unwrap();
        let a = generate_sequence(&spec, 1, 99, 0.0);
        let b = generate_sequence(&spec, 1, 99, 0.0);
        assert_eq!(a, b);
        let c = generate_sequence(&spec, 1, 100, 0.0);
        assert_ne!(a, c);
    }

    #[test]
    fn preset_shapes_are_respected() {
        let fpn = ShapeSpec::fpn(256, 256).unwrap();
        let frames = generate_sequence(&fpn, 1, 1, 0.0);
        let shapes: Vec<TensorShape> = frames[0].tensors().iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, fpn.shapes());

        let darknet = ShapeSpec::darknet();
        let frames = generate_sequence(&darknet, 1, 1, 0.0);
        let shapes: Vec<TensorShape> = frames[0].tensors().iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, darknet.shapes());
    }

    #[test]
    fn sample_stats_track_targets_on_large_tensors() {
        // All tensors here have at least 2^16 elements, so sampling noise is
        // far below the 2% band.
        let spec = ShapeSpec::new(vec![
            TensorShape::new(16, 64, 64),
            TensorShape::new(32, 64, 64),
        ])
        .unwrap();
        for seed in 0..20 {
            let (frames, targets) = generate_sequence_with_targets(&spec, 2, seed, 0.01);
            for (frame, frame_targets) in frames.iter().zip(&targets) {
                for (tensor, target) in frame.tensors().iter().zip(frame_targets) {
                    let got = compute_stats(tensor);
                    let scale = target.std.abs() + target.mean.abs();
                    assert!(
                        (got.mean - target.mean).abs() <= 0.02 * scale,
                        "seed {seed}: mean {} vs target {}",
                        got.mean,
                        target.mean
                    );
                    assert!(
                        (got.std - target.std).abs() <= 0.02 * target.std,
                        "seed {seed}: std {} vs target {}",
                        got.std,
                        target.std
                    );
                }
            }
        }
    }

    #[test]
    fn drift_shifts_targets_linearly() {
        let spec = ShapeSpec::new(vec![TensorShape::new(2, 4, 4)]).unwrap();
        let targets = sequence_targets(&spec, 3, 7, 0.5);
        let base = targets[0][0];
        assert!((targets[1][0].mean - (base.mean + 0.5)).abs() < 1e-6);
        assert!((targets[2][0].mean - (base.mean + 1.0)).abs() < 1e-6);
        assert!((targets[2][0].std - (base.std + 1.0)).abs() < 1e-6);
    }
}
