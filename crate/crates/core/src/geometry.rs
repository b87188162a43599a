//! Axis-aligned pixel boxes under the half-open convention.
//!
//! Boxes are `[x_min, x_max) x [y_min, y_max)` so widths and heights are
//! exact pixel counts. The same convention is used everywhere, including
//! the evaluation metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box ({x_min},{y_min})-({x_max},{y_max}): zero or negative extent")]
    EmptyBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box coordinates must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct PixelBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<RawBox> for PixelBox {
    type Error = GeometryError;
    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        PixelBox::new(r.x_min, r.y_min, r.x_max, r.y_max)
    }
}

impl From<PixelBox> for RawBox {
    fn from(b: PixelBox) -> Self {
        RawBox {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        }
    }
}

impl PixelBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::EmptyBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Intersection-over-union; 0 when disjoint.
    pub fn iou(&self, other: &PixelBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Chebyshev distance between box centers; box scale plays no part.
    pub fn center_chebyshev(&self, other: &PixelBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).abs().max((ay - by).abs())
    }

    pub fn translate(&self, dx: f64, dy: f64) -> PixelBox {
        PixelBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Uniform scale about the origin (positive factor keeps validity).
    pub fn scale(&self, factor: f64) -> PixelBox {
        debug_assert!(factor > 0.0);
        PixelBox {
            x_min: self.x_min * factor,
            y_min: self.y_min * factor,
            x_max: self.x_max * factor,
            y_max: self.y_max * factor,
        }
    }

    /// Clamp to `[0, w) x [0, h)`; `None` if nothing remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<PixelBox> {
        let x_min = self.x_min.max(0.0);
        let y_min = self.y_min.max(0.0);
        let x_max = self.x_max.min(width);
        let y_max = self.y_max.min(height);
        (x_min < x_max && y_min < y_max).then_some(PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }
}
