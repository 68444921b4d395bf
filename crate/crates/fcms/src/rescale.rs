//! Decoder-side Z-score rescaling of reconstructed tensors.
//!
//! Each operation normalizes the reconstruction by its own recomputed mean
//! and standard deviation, then denormalizes with the statistics signaled by
//! the encoder, restoring the original global first and second moments no
//! matter what distortion the inner codec introduced. The reconstruction
//! statistics are always recomputed here, never transmitted.
//!
//! Arithmetic runs in 64-bit; outputs are rounded to binary32.

use crate::fusion::FusedTensor;
use crate::tensor::{stats_f64, FeatureSet, FeatureTensor, TensorStats};
use crate::{Error, Result};

/// Below this reconstructed standard deviation the Z-score is undefined and
/// the output degenerates to a constant.
pub const SIGMA_EPSILON: f64 = 1e-8;

fn affine(data: &[f32], scale: f64, offset: f64) -> Vec<f32> {
    data.iter().map(|&v| (v as f64 * scale + offset) as f32).collect()
}

/// Map data with recomputed statistics `(mean, std)` onto `target`.
fn rescale_data(data: &[f32], mean: f64, std: f64, target: TensorStats) -> Vec<f32> {
    if std < SIGMA_EPSILON {
        return vec![target.mean; data.len()];
    }
    let scale = target.std as f64 / std;
    let offset = target.mean as f64 - scale * mean;
    affine(data, scale, offset)
}

/// Rescale a reconstructed fused tensor onto the signaled fused statistics.
///
/// A degenerate reconstruction (`std < SIGMA_EPSILON`) becomes a constant
/// tensor of the target mean.
pub fn rescale_fused(fused: &FusedTensor, target: TensorStats) -> FusedTensor {
    let (mean, std) = stats_f64(fused.data());
    FusedTensor::from_parts(fused.shape(), rescale_data(fused.data(), mean, std, target))
}

/// Rescale every restored tensor individually onto its signaled statistics.
pub fn rescale_per_tensor(set: &FeatureSet, targets: &[TensorStats]) -> Result<FeatureSet> {
    if targets.len() != set.tensor_count() {
        return Err(Error::InvalidInput(format!(
            "{} targets for {} tensors",
            targets.len(),
            set.tensor_count()
        )));
    }
    let tensors = set
        .tensors()
        .iter()
        .zip(targets)
        .map(|(tensor, &target)| {
            let (mean, std) = stats_f64(tensor.data());
            FeatureTensor::new(tensor.shape(), rescale_data(tensor.data(), mean, std, target))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(tensors, set.frame_index())
}

/// Rescale all restored tensors with one shared affine map derived from
/// pooled statistics.
///
/// The reconstruction pool is `mean = Σ mean_n`, `std = sqrt(Σ std_n²)`. The
/// shared map is `a·x + b` with `a = target.std / pool.std` and
/// `b = (target.mean − a·pool.mean) / N`: the offset is split equally across
/// the `N` tensors because the pooled mean adds one `b` per tensor, so this
/// is the unique shared map that lands the pooled statistics exactly on the
/// target. Cross-tensor ordering is preserved because a single positive
/// scale applies everywhere. A degenerate pool (`std < SIGMA_EPSILON`) makes
/// every tensor the constant `target.mean / N`, again meeting the pooled
/// mean.
pub fn rescale_simplified(set: &FeatureSet, pooled_target: TensorStats) -> Result<FeatureSet> {
    let per_tensor: Vec<(f64, f64)> =
        set.tensors().iter().map(|t| stats_f64(t.data())).collect();
    let pooled_mean: f64 = per_tensor.iter().map(|&(m, _)| m).sum();
    let pooled_std: f64 = per_tensor.iter().map(|&(_, s)| s * s).sum::<f64>().sqrt();

    let tensors: Vec<FeatureTensor> = if pooled_std < SIGMA_EPSILON {
        let share = pooled_target.mean / set.tensor_count() as f32;
        set.tensors()
            .iter()
            .map(|t| FeatureTensor::constant(t.shape(), share))
            .collect::<Result<_>>()?
    } else {
        let scale = pooled_target.std as f64 / pooled_std;
        let offset =
            (pooled_target.mean as f64 - scale * pooled_mean) / set.tensor_count() as f64;
        set.tensors()
            .iter()
            .map(|t| FeatureTensor::new(t.shape(), affine(t.data(), scale, offset)))
            .collect::<Result<_>>()?
    };
    FeatureSet::new(tensors, set.frame_index())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sequence, SequenceRng};
    use crate::tensor::{compute_data_stats, compute_stats, pooled_sum_stats, ShapeSpec, TensorShape};

    fn unit_interval_tensor(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = SequenceRng::new(seed);
        (0..len).map(|_| rng.next_f64() as f32).collect()
    }

    #[test]
    fn fused_rescale_hits_target_stats() {
        let shape = TensorShape::new(4, 32, 32);
        let data = unit_interval_tensor(shape.element_count(), 5);
        let fused = FusedTensor::from_parts(shape, data);
        let target = TensorStats::new(2.0, 3.0);
        let out = rescale_fused(&fused, target);
        let got = compute_data_stats(out.data()).unwrap();
        assert!((got.mean - 2.0).abs() <= 1e-4 * 2.0, "mean {}", got.mean);
        assert!((got.std - 3.0).abs() <= 1e-4 * 3.0, "std {}", got.std);
    }

    #[test]
    fn rescale_with_matching_target_is_near_identity() {
        let shape = TensorShape::new(2, 16, 16);
        let data = unit_interval_tensor(shape.element_count(), 6);
        let fused = FusedTensor::from_parts(shape, data.clone());
        let target = compute_data_stats(&data).unwrap();
        let out = rescale_fused(&fused, target);
        for (&a, &b) in data.iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn degenerate_input_becomes_target_mean() {
        let shape = TensorShape::new(1, 4, 4);
        let fused = FusedTensor::from_parts(shape, vec![0.25; 16]);
        let out = rescale_fused(&fused, TensorStats::new(7.0, 1.0));
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn per_tensor_matches_fused_for_single_tensor() {
        let shape = TensorShape::new(3, 8, 8);
        let data = unit_interval_tensor(shape.element_count(), 7);
        let target = TensorStats::new(-1.0, 0.5);
        let fused_out = rescale_fused(&FusedTensor::from_parts(shape, data.clone()), target);
        let set = FeatureSet::new(vec![FeatureTensor::new(shape, data).unwrap()], 0).unwrap();
        let set_out = rescale_per_tensor(&set, &[target]).unwrap();
        assert_eq!(fused_out.data(), set_out.tensors()[0].data());
    }

    #[test]
    fn per_tensor_restores_each_target() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(8, 16, 16),
            TensorShape::new(16, 8, 8),
            TensorShape::new(32, 4, 4),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 21, 0.0)[0];
        let targets = [
            TensorStats::new(1.5, 2.0),
            TensorStats::new(-3.0, 0.25),
            TensorStats::new(0.5, 4.0),
        ];
        let out = rescale_per_tensor(set, &targets).unwrap();
        for (tensor, target) in out.tensors().iter().zip(&targets) {
            let got = compute_stats(tensor);
            assert!((got.mean - target.mean).abs() <= 1e-4 * target.mean.abs());
            assert!((got.std - target.std).abs() <= 1e-4 * target.std);
        }
    }

    #[test]
    fn per_tensor_arity_mismatch_is_rejected() {
        let spec = ShapeSpec::new(vec![TensorShape::new(2, 4, 4)]).unwrap();
        let set = &generate_sequence(&spec, 1, 0, 0.0)[0];
        let err = rescale_per_tensor(set, &[]).unwrap_err();
        assert_eq!(err.category(), "InvalidInput");
    }

    #[test]
    fn simplified_matches_per_tensor_for_single_tensor() {
        let spec = ShapeSpec::new(vec![TensorShape::new(4, 16, 16)]).unwrap();
        let set = &generate_sequence(&spec, 1, 33, 0.0)[0];
        let target = TensorStats::new(2.5, 1.25);
        let a = rescale_simplified(set, target).unwrap();
        let b = rescale_per_tensor(set, &[target]).unwrap();
        assert_eq!(a.tensors()[0].data(), b.tensors()[0].data());
    }

    #[test]
    fn simplified_restores_pooled_stats() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(8, 16, 16),
            TensorShape::new(16, 8, 8),
            TensorShape::new(4, 32, 32),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 55, 0.0)[0];
        let target = TensorStats::new(3.5, 2.75);
        let out = rescale_simplified(set, target).unwrap();
        let stats: Vec<TensorStats> = out.tensors().iter().map(compute_stats).collect();
        let pooled = pooled_sum_stats(&stats).unwrap();
        let tol = 2.0f32.powi(-8);
        assert!((pooled.mean - target.mean).abs() <= tol * target.mean.abs());
        assert!((pooled.std - target.std).abs() <= tol * target.std);
    }

    #[test]
    fn rescaling_onto_own_stats_is_near_identity() {
        // With an undistorted reconstruction, per-tensor rescaling returns
        // the input within binary32 rounding.
        let spec = ShapeSpec::new(vec![
            TensorShape::new(4, 16, 16),
            TensorShape::new(8, 8, 8),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 61, 0.0)[0];
        let targets: Vec<TensorStats> = set.tensors().iter().map(compute_stats).collect();
        let out = rescale_per_tensor(set, &targets).unwrap();
        for (to, tr) in set.tensors().iter().zip(out.tensors()) {
            for (&a, &b) in to.data().iter().zip(tr.data()) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
            }
        }

        // Same fixed point for the pooled map.
        let pooled = pooled_sum_stats(&targets).unwrap();
        let out = rescale_simplified(set, pooled).unwrap();
        for (to, tr) in set.tensors().iter().zip(out.tensors()) {
            for (&a, &b) in to.data().iter().zip(tr.data()) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn simplified_is_one_affine_map() {
        let spec = ShapeSpec::new(vec![
            TensorShape::new(2, 8, 8),
            TensorShape::new(4, 4, 4),
        ])
        .unwrap();
        let set = &generate_sequence(&spec, 1, 77, 0.0)[0];
        let out = rescale_simplified(set, TensorStats::new(1.0, 2.0)).unwrap();
        // Cross-tensor differences scale by one factor.
        let x0 = set.tensors()[0].data()[3] as f64;
        let x1 = set.tensors()[1].data()[5] as f64;
        let y0 = out.tensors()[0].data()[3] as f64;
        let y1 = out.tensors()[1].data()[5] as f64;
        let x2 = set.tensors()[0].data()[10] as f64;
        let y2 = out.tensors()[0].data()[10] as f64;
        let a01 = (y0 - y1) / (x0 - x1);
        let a02 = (y0 - y2) / (x0 - x2);
        assert!((a01 - a02).abs() <= 1e-4 * a01.abs(), "{a01} vs {a02}");
    }

    #[test]
    fn simplified_degenerate_input_splits_the_mean() {
        let shape = TensorShape::new(1, 2, 2);
        let tensors = vec![
            FeatureTensor::constant(shape, 1.0).unwrap(),
            FeatureTensor::constant(shape, 1.0).unwrap(),
        ];
        let set = FeatureSet::new(tensors, 0).unwrap();
        let out = rescale_simplified(&set, TensorStats::new(6.0, 1.0)).unwrap();
        for t in out.tensors() {
            assert!(t.data().iter().all(|&v| v == 3.0));
        }
    }

    #[test]
    fn rescaling_is_idempotent() {
        let spec = ShapeSpec::new(vec![TensorShape::new(4, 16, 16)]).unwrap();
        let set = &generate_sequence(&spec, 1, 13, 0.0)[0];
        let target = TensorStats::new(0.75, 1.5);
        let once = rescale_per_tensor(set, &[target]).unwrap();
        let twice = rescale_per_tensor(&once, &[target]).unwrap();
        for (&a, &b) in once.tensors()[0].data().iter().zip(twice.tensors()[0].data()) {
            assert!((a - b).abs() <= 4.0 * f32::EPSILON * a.abs().max(1.0));
        }
    }

    #[test]
    fn rescaling_preserves_element_order() {
        let shape = TensorShape::new(1, 1, 5);
        let data = vec![0.1f32, 0.9, 0.4, 0.2, 0.7];
        let fused = FusedTensor::from_parts(shape, data);
        let out = rescale_fused(&fused, TensorStats::new(10.0, 3.0));
        let v = out.data();
        assert!(v[0] < v[3] && v[3] < v[2] && v[2] < v[4] && v[4] < v[1]);
    }
}
