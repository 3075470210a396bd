use crate::error::{bail, Result};
use crate::kernels::resample::resize_bilinear;
use crate::tensor::Tensor;

pub const DEFAULT_SIZE: usize = 384;
const STD_FLOOR: f64 = 1e-8;

/// Bilinear resize to `target × target` followed by per-image, per-channel
/// z-scoring (standard deviation floored at `1e-8`).
pub fn preprocess(image: &Tensor<f32>, target: usize) -> Result<Tensor<f32>> {
    let s = image.shape();
    if s.numel() == 0 || target == 0 {
        bail!(Input, "cannot preprocess empty image {s} to {target}");
    }
    let mut out = if s.h() == target && s.w() == target {
        image.clone()
    } else {
        resize_bilinear(image, target, target)
    };
    standardize(&mut out);
    Ok(out)
}

/// In-place z-score of every `[H, W]` plane.
pub fn standardize(x: &mut Tensor<f32>) {
    let plane = x.shape().plane();
    for p in x.data_mut().chunks_exact_mut(plane) {
        let n = p.len() as f64;
        let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(STD_FLOOR);
        p.iter_mut().for_each(|v| *v = ((*v as f64 - mean) / std) as f32);
    }
}

/// Resize an externally produced map and rescale it to `[0, 1]` by min-max.
/// A constant map is clamped into `[0, 1]` instead.
pub fn prepare_map(map: &Tensor<f32>, target: usize) -> Result<Tensor<f32>> {
    let s = map.shape();
    if s.numel() == 0 || s.c() != 1 {
        bail!(Input, "attention map {s} must be a non-empty single channel");
    }
    let mut out = if s.h() == target && s.w() == target {
        map.clone()
    } else {
        resize_bilinear(map, target, target)
    };
    for p in out.data_mut().chunks_exact_mut(target * target) {
        let lo = p.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = p.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if hi - lo > f32::EPSILON * hi.abs().max(1.0) {
            p.iter_mut().for_each(|v| *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0));
        } else {
            p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn constant_image_standardizes_to_zero() {
        let out = preprocess(&Tensor::full([1, 1, 10, 10], 3.5), 8).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standard_normal_image_has_unit_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::randn([1, 3, 384, 384], &mut rng);
        let out = preprocess(&x, 384).unwrap();
        for p in out.data().chunks_exact(384 * 384) {
            let n = p.len() as f64;
            let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n;
            let std = (p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-6, "std {std}");
        }
    }

    #[test]
    fn empty_image_is_rejected() {
        assert!(preprocess(&Tensor::zeros([1, 1, 0, 4]), 8).is_err());
    }

    #[test]
    fn maps_are_min_max_rescaled() {
        let map = Tensor::from_vec([1, 1, 2, 2], vec![2.0, 4.0, 6.0, 10.0]).unwrap();
        let out = prepare_map(&map, 2).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 0.5, 1.0]);
        let zero = prepare_map(&Tensor::zeros([1, 1, 3, 3]), 3).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }
}
