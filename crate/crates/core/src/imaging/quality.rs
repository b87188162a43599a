use super::{ImageBuffer, ImagingError};

/// Peak signal-to-noise ratio in decibels: `10 * log10(255^2 / MSE)`.
///
/// The MSE is averaged over all samples and channels jointly of the 8-bit
/// stored values. Identical images give `+inf`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImagingError> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(ImagingError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            a_channels: a.channels(),
            b_width: b.width(),
            b_height: b.height(),
            b_channels: b.channels(),
        });
    }
    let sq_sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sq_sum / a.data().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_are_infinite() {
        let img = ImageBuffer::filled(8, 8, 3, 99).unwrap();
        assert_eq!(psnr(&img, &img).unwrap(), f64::INFINITY);
    }

    #[test]
    fn full_scale_error_is_zero_db() {
        let a = ImageBuffer::filled(16, 16, 1, 0).unwrap();
        let b = ImageBuffer::filled(16, 16, 1, 255).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    // Uniform one-level offset: MSE = 1, so PSNR = 20*log10(255) = 48.1308 dB.
    #[test]
    fn one_level_offset_anchor() {
        let a = ImageBuffer::filled(32, 32, 3, 100).unwrap();
        let b = ImageBuffer::filled(32, 32, 3, 101).unwrap();
        let db = psnr(&a, &b).unwrap();
        assert!((db - 48.1308).abs() < 1e-3, "got {db}");
    }

    #[test]
    fn symmetric() {
        let a = ImageBuffer::new(4, 1, 1, vec![0, 10, 200, 255]).unwrap();
        let b = ImageBuffer::new(4, 1, 1, vec![3, 12, 190, 100]).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn mismatched_shapes_error() {
        let a = ImageBuffer::filled(4, 4, 1, 0).unwrap();
        let b = ImageBuffer::filled(4, 5, 1, 0).unwrap();
        assert!(psnr(&a, &b).is_err());
        let c = ImageBuffer::filled(4, 4, 3, 0).unwrap();
        assert!(psnr(&a, &c).is_err());
    }
}
