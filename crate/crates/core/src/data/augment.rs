use rand::Rng;

use crate::kernels::resample::sample_bilinear;
use crate::tensor::Tensor;

pub const MAX_ROTATION_DEG: f64 = 10.0;

/// One realized geometric transform. Flips are applied first, then the
/// rotation about the image center.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise in image display coordinates (y pointing down).
    pub angle_deg: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams { hflip: false, vflip: false, angle_deg: 0.0 };

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let hflip = rng.gen_bool(0.5);
        let vflip = rng.gen_bool(0.5);
        let mut angle_deg = rng.gen_range(-MAX_ROTATION_DEG..MAX_ROTATION_DEG);
        // open interval at both ends
        while angle_deg <= -MAX_ROTATION_DEG {
            angle_deg = rng.gen_range(-MAX_ROTATION_DEG..MAX_ROTATION_DEG);
        }
        AugmentParams { hflip, vflip, angle_deg }
    }

    /// Where the source pixel center `(x, y)` ends up in the output.
    pub fn forward_point(&self, x: f64, y: f64, h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let x = if self.hflip { 2.0 * cx - x } else { x };
        let y = if self.vflip { 2.0 * cy - y } else { y };
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        // y grows downward, so a visually counter-clockwise turn flips the sign of sin
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    }

    fn inverse_point(&self, x: f64, y: f64, h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        let sx = cx + c * dx - s * dy;
        let sy = cy + s * dx + c * dy;
        let sx = if self.hflip { 2.0 * cx - sx } else { sx };
        let sy = if self.vflip { 2.0 * cy - sy } else { sy };
        (sx, sy)
    }

    /// Applies the transform to every channel of `x` identically, so a
    /// stacked image and map stay registered.
    pub fn apply(&self, x: &Tensor<f32>) -> Tensor<f32> {
        let [_, _, h, w] = x.shape().0;
        if self.angle_deg == 0.0 {
            return flip_only(x, self.hflip, self.vflip);
        }
        let coords: Vec<(f64, f64)> = (0..h)
            .flat_map(|y| (0..w).map(move |xx| (xx, y)))
            .map(|(xx, y)| self.inverse_point(xx as f64, y as f64, h, w))
            .collect();
        let mut out = Vec::with_capacity(x.numel());
        for plane in x.data().chunks_exact(h * w) {
            out.extend(coords.iter().map(|&(sx, sy)| sample_bilinear(plane, h, w, sy, sx, 0.0)));
        }
        Tensor::from_vec(x.shape(), out).unwrap()
    }
}

fn flip_only(x: &Tensor<f32>, hflip: bool, vflip: bool) -> Tensor<f32> {
    let [_, _, h, w] = x.shape().0;
    let mut out = x.clone();
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(h * w)) {
        for y in 0..h {
            let sy = if vflip { h - 1 - y } else { y };
            for xx in 0..w {
                let sx = if hflip { w - 1 - xx } else { xx };
                dst[y * w + xx] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Draws a transform and applies it to the stacked input.
pub fn augment<R: Rng + ?Sized>(x: &Tensor<f32>, rng: &mut R) -> Tensor<f32> {
    AugmentParams::draw(rng).apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp() -> Tensor<f32> {
        Tensor::from_fn([1, 2, 5, 7], |[_, c, y, x]| (c * 100 + y * 7 + x) as f32)
    }

    #[test]
    fn identity_transform() {
        assert_eq!(AugmentParams::IDENTITY.apply(&ramp()), ramp());
    }

    #[test]
    fn flips_are_involutions() {
        for (h, v) in [(true, false), (false, true), (true, true)] {
            let p = AugmentParams { hflip: h, vflip: v, angle_deg: 0.0 };
            assert_eq!(p.apply(&p.apply(&ramp())), ramp());
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (mut h, mut v) = (0, 0);
        for _ in 0..2000 {
            let p = AugmentParams::draw(&mut rng);
            assert!(p.angle_deg > -10.0 && p.angle_deg < 10.0);
            h += p.hflip as usize;
            v += p.vflip as usize;
        }
        assert!((900..1100).contains(&h) && (900..1100).contains(&v));
    }

    #[test]
    fn quarter_turn_moves_corner_as_expected() {
        // sanity check of the orientation convention on a pure 90 degree turn
        let p = AugmentParams { hflip: false, vflip: false, angle_deg: 90.0 };
        let mut x = Tensor::<f32>::zeros([1, 1, 5, 5]);
        *x.at_mut(0, 0, 0, 4) = 1.0; // top right
        let y = p.apply(&x);
        let (fx, fy) = p.forward_point(4.0, 0.0, 5, 5);
        assert!((fx - 0.0).abs() < 1e-9 && (fy - 0.0).abs() < 1e-9);
        assert!((y.at(0, 0, 0, 0) - 1.0).abs() < 1e-5);
    }
}
