//! Small dense feature tensors for the toy network forward passes.
//!
//! Layout is row-major HWC (and layer-major NHWC for stacks). These are
//! deliberately plain: every op that consumes them spells out its own
//! arithmetic so forward passes stay deterministic and auditable.

use crate::imaging::ImageBuffer;

/// Rank-3 feature map, `height x width x channels`, row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "dims must be positive");
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * channels, "data length mismatch");
        assert!(height > 0 && width > 0 && channels > 0, "dims must be positive");
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Promote an 8-bit image to `[0, 1]` features, one channel per plane.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let data = img.data().iter().map(|&v| v as f32 / 255.0).collect();
        Self {
            height: img.height() as usize,
            width: img.width() as usize,
            channels: img.channels() as usize,
            data,
        }
    }

    /// Quantize back to 8-bit storage. Only valid for 1- or 3-channel maps.
    pub fn to_image(&self) -> ImageBuffer {
        assert!(self.channels == 1 || self.channels == 3);
        let data = self.data.iter().map(|&v| ImageBuffer::quantize(v)).collect();
        ImageBuffer::new(
            self.width as u32,
            self.height as u32,
            self.channels as u8,
            data,
        )
        .expect("valid dims by construction")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }
}

/// Rank-4 stack of equally-shaped feature maps (`layers x H x W x C`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    layers: Vec<FeatureTensor>,
}

impl FeatureStack {
    pub fn new(layers: Vec<FeatureTensor>) -> Self {
        assert!(!layers.is_empty(), "stack needs at least one layer");
        let first = &layers[0];
        assert!(
            layers.iter().all(|l| l.same_shape(first)),
            "all layers must share a shape"
        );
        Self { layers }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[FeatureTensor] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &FeatureTensor {
        &self.layers[i]
    }

    pub fn into_layers(self) -> Vec<FeatureTensor> {
        self.layers
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.all_finite())
    }
}
