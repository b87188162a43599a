//! Image buffers, bicubic resampling, PSNR, and lossless PNM I/O.
//!
//! This is the numeric substrate for the rest of the pipeline: degradation,
//! upscaling, and reconstruction quality measurement all go through here.
//! Storage is 8-bit per sample; computation promotes to real values.

mod buffer;
mod io;
mod quality;
mod resample;

pub use buffer::ImageBuffer;
pub use io::{load_image, save_image};
pub use quality::psnr;
pub use resample::resample_bicubic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid image dimensions {width}x{height} with {channels} channel(s)")]
    InvalidDimensions {
        width: u32,
        height: u32,
        channels: u8,
    },
    #[error("data length {actual} does not match {expected} (width*height*channels)")]
    DataLength { expected: usize, actual: usize },
    #[error("invalid resample target {width}x{height}")]
    InvalidTarget { width: u32, height: u32 },
    #[error("dimension mismatch: {a_width}x{a_height}x{a_channels} vs {b_width}x{b_height}x{b_channels}")]
    DimensionMismatch {
        a_width: u32,
        a_height: u32,
        a_channels: u8,
        b_width: u32,
        b_height: u32,
        b_channels: u8,
    },
    #[error("invalid scale factor {0}: must be positive and finite")]
    InvalidScale(f64),
    #[error("{path}: malformed image file: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: unsupported image format (expected .pgm/.ppm/.pnm)")]
    UnsupportedFormat { path: String },
    #[error("{path}: unsupported bit depth (maxval {maxval}, only 255 supported)")]
    UnsupportedBitDepth { path: String, maxval: u32 },
}

/// Resampling factor. Survey-protocol operations (degradation sweeps, SR
/// backends) restrict it to x2/x4/x8; general resampling accepts any
/// positive value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(value: f64) -> Result<Self, ImagingError> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(ImagingError::InvalidScale(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The integer factor if this is one of the protocol factors {2, 4, 8}.
    pub fn survey_factor(self) -> Option<u32> {
        match self.0 {
            v if v == 2.0 => Some(2),
            v if v == 4.0 => Some(4),
            v if v == 8.0 => Some(8),
            _ => None,
        }
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_factor_rejects_nonpositive() {
        assert!(ScaleFactor::new(0.0).is_err());
        assert!(ScaleFactor::new(-2.0).is_err());
        assert!(ScaleFactor::new(f64::NAN).is_err());
        assert!(ScaleFactor::new(f64::INFINITY).is_err());
    }

    #[test]
    fn survey_factors_are_two_four_eight() {
        assert_eq!(ScaleFactor::new(2.0).unwrap().survey_factor(), Some(2));
        assert_eq!(ScaleFactor::new(4.0).unwrap().survey_factor(), Some(4));
        assert_eq!(ScaleFactor::new(8.0).unwrap().survey_factor(), Some(8));
        assert_eq!(ScaleFactor::new(3.0).unwrap().survey_factor(), None);
        assert_eq!(ScaleFactor::new(0.5).unwrap().survey_factor(), None);
    }
}
