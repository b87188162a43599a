use super::{ImageBuffer, ImagingError};

/// Keys cubic convolution kernel with a = -0.5 (Catmull-Rom).
///
/// Reproduces degree-1 polynomials exactly, which pins down the resampled
/// values of linear ramps to the analytic answer.
const A: f32 = -0.5;

#[inline]
fn keys_weight(x: f32) -> f32 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

struct TapPlan {
    /// First source index of the 4-tap window, clamped per tap at use site.
    base: isize,
    weights: [f32; 4],
}

/// Pixel-center aligned source positions with per-position weights,
/// normalized so constants are reproduced exactly.
fn plan_taps(src_len: u32, dst_len: u32) -> Vec<TapPlan> {
    let scale = src_len as f32 / dst_len as f32;
    (0..dst_len)
        .map(|d| {
            let src = (d as f32 + 0.5) * scale - 0.5;
            let base = src.floor() as isize - 1;
            let mut weights = [0.0f32; 4];
            let mut sum = 0.0f32;
            for (k, w) in weights.iter_mut().enumerate() {
                *w = keys_weight(src - (base + k as isize) as f32);
                sum += *w;
            }
            for w in &mut weights {
                *w /= sum;
            }
            TapPlan { base, weights }
        })
        .collect()
}

/// Bicubic resampling to the requested dimensions.
///
/// Separable Keys cubic convolution with clamp-to-edge extension; values
/// are computed in real arithmetic and quantized (round half away from
/// zero, clamp) on storage. Deterministic: identical inputs give
/// bitwise-identical outputs.
pub fn resample_bicubic(
    src: &ImageBuffer,
    target_w: u32,
    target_h: u32,
) -> Result<ImageBuffer, ImagingError> {
    if target_w == 0 || target_h == 0 {
        return Err(ImagingError::InvalidTarget {
            width: target_w,
            height: target_h,
        });
    }
    let (sw, sh) = (src.width(), src.height());
    let ch = src.channels() as usize;
    let x_taps = plan_taps(sw, target_w);
    let y_taps = plan_taps(sh, target_h);

    // Horizontal pass: (sh x target_w), values stay in [0,1] real space.
    let mut mid = vec![0.0f32; sh as usize * target_w as usize * ch];
    let src_data = src.data();
    for y in 0..sh as usize {
        let row = &src_data[y * sw as usize * ch..(y + 1) * sw as usize * ch];
        for (x, plan) in x_taps.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (k, &w) in plan.weights.iter().enumerate() {
                    let sx = (plan.base + k as isize).clamp(0, sw as isize - 1) as usize;
                    acc += w * (row[sx * ch + c] as f32 / 255.0);
                }
                mid[(y * target_w as usize + x) * ch + c] = acc;
            }
        }
    }

    // Vertical pass with quantization on store.
    let mut out = vec![0u8; target_h as usize * target_w as usize * ch];
    for (y, plan) in y_taps.iter().enumerate() {
        for x in 0..target_w as usize {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (k, &w) in plan.weights.iter().enumerate() {
                    let sy = (plan.base + k as isize).clamp(0, sh as isize - 1) as usize;
                    acc += w * mid[(sy * target_w as usize + x) * ch + c];
                }
                out[(y * target_w as usize + x) * ch + c] = ImageBuffer::quantize(acc);
            }
        }
    }
    ImageBuffer::new(target_w, target_h, src.channels(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_contract() {
        let img = ImageBuffer::filled(512, 512, 3, 40).unwrap();
        let out = resample_bicubic(&img, 256, 256).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (256, 256, 3));
    }

    #[test]
    fn zero_target_is_error() {
        let img = ImageBuffer::filled(8, 8, 1, 0).unwrap();
        assert!(resample_bicubic(&img, 0, 4).is_err());
        assert!(resample_bicubic(&img, 4, 0).is_err());
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(37, 23, 3, 143).unwrap();
        for &(w, h) in &[(74, 46), (19, 11), (37, 23), (100, 5)] {
            let out = resample_bicubic(&img, w, h).unwrap();
            assert!(out.data().iter().all(|&v| v == 143));
        }
    }

    // Cubic convolution reproduces degree-1 polynomials: a horizontal ramp
    // f(x) = 8x downsampled x2 must land on the analytic ramp evaluated at
    // the new (pixel-center) sample positions, 8*(2x + 0.5) = 16x + 4.
    #[test]
    fn ramp_downsample_matches_analytic_values() {
        let w = 32u32;
        let data: Vec<u8> = (0..w).map(|x| (8 * x) as u8).collect();
        let img = ImageBuffer::new(w, 1, 1, data).unwrap();
        let out = resample_bicubic(&img, 16, 1).unwrap();
        for x in 0..16u32 {
            let expected = (16 * x + 4) as i32;
            let actual = out.sample(x, 0, 0) as i32;
            assert!(
                (actual - expected).abs() <= 1,
                "x={x}: expected {expected}±1, got {actual}"
            );
        }
    }

    #[test]
    fn identity_resample_within_one_level() {
        let mut data = Vec::with_capacity(31 * 17);
        let mut v: u32 = 7;
        for _ in 0..31 * 17 {
            v = v.wrapping_mul(1103515245).wrapping_add(12345);
            data.push((v >> 16) as u8);
        }
        let img = ImageBuffer::new(31, 17, 1, data).unwrap();
        let out = resample_bicubic(&img, 31, 17).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn resample_is_deterministic() {
        let data: Vec<u8> = (0..64u32 * 48).map(|i| (i * 37 % 251) as u8).collect();
        let img = ImageBuffer::new(64, 48, 1, data).unwrap();
        let a = resample_bicubic(&img, 13, 29).unwrap();
        let b = resample_bicubic(&img, 13, 29).unwrap();
        assert_eq!(a, b);
    }
}
