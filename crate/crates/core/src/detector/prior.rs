//! Ground-sampling-distance math and the altitude scale prior.
//!
//! Capture altitude pins down how many meters of ground one pixel spans,
//! which in turn constrains the plausible pixel extent of an animal. The
//! filter here is the deterministic realization of that constraint.

use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::tiling::Detection;

/// Pinhole camera description sufficient for GSD computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    focal_length_m: f64,
    pixel_pitch_m: f64,
}

impl CameraModel {
    pub fn new(focal_length_m: f64, pixel_pitch_m: f64) -> Result<Self, DetectorError> {
        if !(focal_length_m > 0.0 && focal_length_m.is_finite()) {
            return Err(DetectorError::NonPositive {
                name: "focal_length_m",
                value: focal_length_m,
            });
        }
        if !(pixel_pitch_m > 0.0 && pixel_pitch_m.is_finite()) {
            return Err(DetectorError::NonPositive {
                name: "pixel_pitch_m",
                value: pixel_pitch_m,
            });
        }
        Ok(Self {
            focal_length_m,
            pixel_pitch_m,
        })
    }

    pub fn focal_length_m(&self) -> f64 {
        self.focal_length_m
    }

    pub fn pixel_pitch_m(&self) -> f64 {
        self.pixel_pitch_m
    }
}

/// Ground sampling distance in meters per pixel:
/// `altitude * pixel_pitch / focal_length`.
pub fn gsd(altitude_m: f64, camera: &CameraModel) -> Result<f64, DetectorError> {
    if !(altitude_m > 0.0 && altitude_m.is_finite()) {
        return Err(DetectorError::BadAltitude(altitude_m));
    }
    Ok(altitude_m * camera.pixel_pitch_m / camera.focal_length_m)
}

/// Keep only detections whose pixel extent is plausible for an animal of
/// `animal_extent_m` meters seen from `altitude_m`.
///
/// The expected extent is `e = animal_extent_m / gsd`; a detection passes
/// when `max(width, height)` lies in `[k_lo * e, k_hi * e]`.
pub fn scale_prior_filter(
    dets: &[Detection],
    altitude_m: f64,
    camera: &CameraModel,
    animal_extent_m: f64,
    band: (f64, f64),
) -> Result<Vec<Detection>, DetectorError> {
    let (k_lo, k_hi) = band;
    if !(k_lo > 0.0 && k_hi > k_lo && k_hi.is_finite()) {
        return Err(DetectorError::InvalidBand { lo: k_lo, hi: k_hi });
    }
    if !(animal_extent_m > 0.0 && animal_extent_m.is_finite()) {
        return Err(DetectorError::NonPositive {
            name: "animal_extent_m",
            value: animal_extent_m,
        });
    }
    let expected = animal_extent_m / gsd(altitude_m, camera)?;
    Ok(dets
        .iter()
        .filter(|d| {
            let extent = d.rect.width().max(d.rect.height());
            extent >= k_lo * expected && extent <= k_hi * expected
        })
        .copied()
        .collect())
}

/// Default scale-prior band: a quarter to four times the expected extent.
pub const DEFAULT_SCALE_BAND: (f64, f64) = (0.25, 4.0);

/// Default animal extent in meters for the prior.
pub const DEFAULT_ANIMAL_EXTENT_M: f64 = 2.0;
