use super::ImagingError;

/// Row-major interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
///
/// Samples are stored as `u8`; computation-facing accessors promote to
/// real values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// All samples set to `value`.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, ImagingError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn sample(&self, x: u32, y: u32, c: u8) -> u8 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize]
    }

    #[inline]
    pub fn set_sample(&mut self, x: u32, y: u32, c: u8, value: u8) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize] = value;
    }

    /// Sample promoted to `[0, 1]`.
    #[inline]
    pub fn sample_norm(&self, x: u32, y: u32, c: u8) -> f32 {
        self.sample(x, y, c) as f32 / 255.0
    }

    /// Channel-mean intensity in `[0, 1]` at one pixel.
    #[inline]
    pub fn intensity(&self, x: u32, y: u32) -> f32 {
        let base =
            (y as usize * self.width as usize + x as usize) * self.channels as usize;
        let sum: u32 = self.data[base..base + self.channels as usize]
            .iter()
            .map(|&v| v as u32)
            .sum();
        sum as f32 / (self.channels as f32 * 255.0)
    }

    /// Pixel-exact crop. The rectangle must lie fully inside the image.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<ImageBuffer, ImagingError> {
        if w == 0 || h == 0 || x.checked_add(w).is_none_or(|xe| xe > self.width)
            || y.checked_add(h).is_none_or(|ye| ye > self.height)
        {
            return Err(ImagingError::InvalidDimensions {
                width: w,
                height: h,
                channels: self.channels,
            });
        }
        let ch = self.channels as usize;
        let row_len = w as usize * ch;
        let mut data = Vec::with_capacity(row_len * h as usize);
        for yy in y..y + h {
            let start = (yy as usize * self.width as usize + x as usize) * ch;
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        ImageBuffer::new(w, h, self.channels, data)
    }

    /// Quantize a real value in `[0, 1]` back to 8-bit storage:
    /// round half away from zero, then clamp.
    #[inline]
    pub fn quantize(value: f32) -> u8 {
        (value * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ImageBuffer::new(0, 4, 1, vec![]).is_err());
        assert!(ImageBuffer::new(4, 0, 1, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0; 5]).is_err());
    }

    #[test]
    fn sample_roundtrip() {
        let mut img = ImageBuffer::filled(3, 2, 3, 0).unwrap();
        img.set_sample(2, 1, 1, 200);
        assert_eq!(img.sample(2, 1, 1), 200);
        assert_eq!(img.sample(0, 0, 0), 0);
    }

    #[test]
    fn crop_matches_direct_indexing() {
        let data: Vec<u8> = (0..36).collect();
        let img = ImageBuffer::new(6, 6, 1, data).unwrap();
        let crop = img.crop(2, 3, 3, 2).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(crop.sample(x, y, 0), img.sample(x + 2, y + 3, 0));
            }
        }
    }

    #[test]
    fn crop_out_of_bounds_is_error() {
        let img = ImageBuffer::filled(4, 4, 1, 0).unwrap();
        assert!(img.crop(2, 2, 3, 3).is_err());
    }

    #[test]
    fn quantize_rounds_half_away_and_clamps() {
        assert_eq!(ImageBuffer::quantize(0.0), 0);
        assert_eq!(ImageBuffer::quantize(1.0), 255);
        assert_eq!(ImageBuffer::quantize(1.5), 255);
        assert_eq!(ImageBuffer::quantize(-0.1), 0);
        // 127.5/255 rounds away from zero to 128
        assert_eq!(ImageBuffer::quantize(127.5 / 255.0), 128);
    }
}
