//! Super-resolution backends: native bicubic upscaling, a toy-scale
//! holistic-attention network forward pass, and a subprocess adapter for
//! plugging in externally trained models.

mod adapter;
mod attention;
mod han;

pub use adapter::{external_upscale, AdapterConfig};
pub use attention::{
    channel_spatial_attention, channel_spatial_attention_map, layer_attention,
    layer_attention_matrix,
};
pub use han::{han_forward, han_forward_no_attention, pixel_shuffle, pixel_unshuffle, HanConfig, HanWeights};

use thiserror::Error;

use crate::imaging::{resample_bicubic, ImageBuffer, ImagingError, ScaleFactor};
use crate::weights::WeightsError;

#[derive(Debug, Error)]
pub enum SrError {
    #[error("unsupported scale factor {0}: protocol factors are 2, 4, 8")]
    UnsupportedFactor(f64),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("channel count {channels} not divisible by r^2 = {r_squared}")]
    ChannelsNotDivisible { channels: usize, r_squared: usize },
    #[error("expected a 3-channel patch, got {0} channel(s)")]
    WrongPatchChannels(u8),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("failed to launch adapter {executable}: {source}")]
    AdapterLaunch {
        executable: String,
        source: std::io::Error,
    },
    #[error("adapter exited with status {status}; stderr: {stderr}")]
    AdapterFailed { status: i32, stderr: String },
    #[error("adapter timed out after {0} s")]
    AdapterTimeout(u64),
    #[error("adapter output is {got_w}x{got_h}x{got_c}, contract requires {want_w}x{want_h}x3")]
    AdapterOutputDims {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
        got_c: u8,
    },
    #[error("adapter output unreadable: {0}")]
    AdapterOutputUnreadable(#[source] ImagingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn require_survey_factor(r: ScaleFactor) -> Result<u32, SrError> {
    r.survey_factor().ok_or(SrError::UnsupportedFactor(r.get()))
}

/// Upscale a patch by one of the protocol factors via bicubic resampling.
pub fn upscale_bicubic(patch: &ImageBuffer, r: ScaleFactor) -> Result<ImageBuffer, SrError> {
    let f = require_survey_factor(r)?;
    Ok(resample_bicubic(patch, patch.width() * f, patch.height() * f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::psnr;

    #[test]
    fn upscale_doubles_dimensions() {
        let img = ImageBuffer::filled(512, 512, 3, 9).unwrap();
        let out = upscale_bicubic(&img, ScaleFactor::new(2.0).unwrap()).unwrap();
        assert_eq!((out.width(), out.height()), (1024, 1024));
        assert!(out.data().iter().all(|&v| v == 9));
    }

    #[test]
    fn non_survey_factor_is_rejected() {
        let img = ImageBuffer::filled(8, 8, 3, 0).unwrap();
        assert!(matches!(
            upscale_bicubic(&img, ScaleFactor::new(3.0).unwrap()),
            Err(SrError::UnsupportedFactor(_))
        ));
    }

    #[test]
    fn down_up_on_smooth_image_stays_above_30db() {
        // smooth Gaussian bumps: band-limited enough that x2 down/up
        // reconstructs well
        let size = 128u32;
        let mut img = ImageBuffer::filled(size, size, 1, 0).unwrap();
        let bumps = [(32.0f64, 40.0, 180.0), (90.0, 80.0, 220.0), (60.0, 100.0, 140.0)];
        for y in 0..size {
            for x in 0..size {
                let mut v = 30.0f64;
                for &(cx, cy, amp) in &bumps {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    v += amp * (-d2 / (2.0 * 12.0f64.powi(2))).exp();
                }
                img.set_sample(x, y, 0, v.round().clamp(0.0, 255.0) as u8);
            }
        }
        let down = resample_bicubic(&img, size / 2, size / 2).unwrap();
        let up = upscale_bicubic(&down, ScaleFactor::new(2.0).unwrap()).unwrap();
        let db = psnr(&img, &up).unwrap();
        assert!(db > 30.0, "psnr {db}");
    }
}
