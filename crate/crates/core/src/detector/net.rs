//! Toy altitude-augmented detection network.
//!
//! A strided conv backbone produces a three-level feature pyramid; the
//! coarsest map is flattened, the capture altitude is appended to the
//! feature vector and mapped through two fully connected layers, and a
//! 1x1 head decodes grid-cell box predictions against a single anchor.

use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::geometry::PixelBox;
use crate::imaging::ImageBuffer;
use crate::nn::{conv2d, linear, relu_inplace, sigmoid};
use crate::tensor::FeatureTensor;
use crate::tiling::Detection;
use crate::weights::{SeededInit, WeightStore, WeightsError};

pub const PYRAMID_STRIDES: [u32; 3] = [8, 16, 32];

/// Single anchor box in pixels, sized to the mean ground-truth animal.
pub const DEFAULT_ANCHOR: (f64, f64) = (25.0, 23.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub input_size: u32,
    pub head_channels: usize,
    pub fc_hidden: usize,
    pub conf_threshold: f64,
    /// Altitude is divided by this before concatenation; 1.0 feeds the
    /// raw meter value.
    pub altitude_normalizer: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 512,
            head_channels: 16,
            fc_hidden: 64,
            conf_threshold: 0.1,
            altitude_normalizer: 1000.0,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(DetectorError::InvalidConfig(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            )));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(DetectorError::InvalidConfig(format!(
                "conf_threshold {} outside [0, 1]",
                self.conf_threshold
            )));
        }
        if self.head_channels == 0 || self.fc_hidden == 0 {
            return Err(DetectorError::InvalidConfig(
                "head_channels and fc_hidden must be positive".into(),
            ));
        }
        if !(self.altitude_normalizer > 0.0 && self.altitude_normalizer.is_finite()) {
            return Err(DetectorError::InvalidConfig(format!(
                "altitude_normalizer {} must be positive",
                self.altitude_normalizer
            )));
        }
        Ok(())
    }

    /// Flattened length of the stride-32 feature map.
    pub fn fused_len(&self) -> usize {
        let cells = (self.input_size / 32) as usize;
        cells * cells * self.head_channels
    }

    /// Conv channel plan: `(in, out)` per backbone layer, input first.
    fn conv_plan(&self) -> [(usize, usize); 5] {
        let hc = self.head_channels;
        [(3, 8), (8, 8), (8, hc), (hc, hc), (hc, hc)]
    }
}

/// The two fully connected layers that absorb the altitude scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseWeights {
    input_len: usize, // L + 1
    hidden: usize,
    out_len: usize, // L
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: Vec<f32>,
}

impl FuseWeights {
    pub fn new(
        input_len: usize,
        hidden: usize,
        out_len: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: Vec<f32>,
    ) -> Result<Self, DetectorError> {
        if w1.len() != hidden * input_len
            || b1.len() != hidden
            || w2.len() != out_len * hidden
            || b2.len() != out_len
        {
            return Err(DetectorError::InvalidConfig(
                "fuse weight shapes inconsistent".into(),
            ));
        }
        Ok(Self {
            input_len,
            hidden,
            out_len,
            w1,
            b1,
            w2,
            b2,
        })
    }

    fn seeded(init: &mut SeededInit, input_len: usize, hidden: usize, out_len: usize) -> Self {
        let s1 = (1.0 / input_len as f32).sqrt();
        let s2 = (1.0 / hidden as f32).sqrt();
        Self {
            input_len,
            hidden,
            out_len,
            w1: init.uniform(hidden * input_len, s1),
            b1: init.uniform(hidden, s1),
            w2: init.uniform(out_len * hidden, s2),
            b2: init.uniform(out_len, s2),
        }
    }

    /// Zero the column multiplying the altitude element, making the fused
    /// output provably altitude-invariant.
    pub fn zero_altitude_column(&mut self) {
        let col = self.input_len - 1;
        for row in 0..self.hidden {
            self.w1[row * self.input_len + col] = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    conv_w: Vec<Vec<f32>>,
    conv_b: Vec<Vec<f32>>,
    pub fuse: FuseWeights,
    head_w: Vec<f32>,
    head_b: Vec<f32>,
}

impl DetectorWeights {
    /// Deterministic seeded initialization for the full network.
    pub fn seeded(cfg: &DetectorConfig) -> Self {
        let mut init = SeededInit::new(cfg.seed);
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (in_c, out_c) in cfg.conv_plan() {
            let scale = (1.0 / (in_c * 9) as f32).sqrt();
            conv_w.push(init.uniform(out_c * in_c * 9, scale));
            conv_b.push(init.uniform(out_c, scale));
        }
        let l = cfg.fused_len();
        let fuse = FuseWeights::seeded(&mut init, l + 1, cfg.fc_hidden, l);
        let head_scale = (1.0 / cfg.head_channels as f32).sqrt();
        let head_w = init.uniform(5 * cfg.head_channels, head_scale);
        let head_b = init.uniform(5, head_scale);
        Self {
            conv_w,
            conv_b,
            fuse,
            head_w,
            head_b,
        }
    }

    /// All-zero weights; useful for structural tests.
    pub fn zeroed(cfg: &DetectorConfig) -> Self {
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (in_c, out_c) in cfg.conv_plan() {
            conv_w.push(SeededInit::zeros(out_c * in_c * 9));
            conv_b.push(SeededInit::zeros(out_c));
        }
        let l = cfg.fused_len();
        let fuse = FuseWeights::new(
            l + 1,
            cfg.fc_hidden,
            l,
            SeededInit::zeros(cfg.fc_hidden * (l + 1)),
            SeededInit::zeros(cfg.fc_hidden),
            SeededInit::zeros(l * cfg.fc_hidden),
            SeededInit::zeros(l),
        )
        .expect("consistent shapes");
        Self {
            conv_w,
            conv_b,
            fuse,
            head_w: SeededInit::zeros(5 * cfg.head_channels),
            head_b: SeededInit::zeros(5),
        }
    }

    pub fn to_store(&self, cfg: &DetectorConfig) -> WeightStore {
        let mut store = WeightStore::new();
        for (i, (in_c, out_c)) in cfg.conv_plan().into_iter().enumerate() {
            store
                .insert(
                    &format!("backbone.conv{}.weight", i + 1),
                    vec![out_c, in_c, 3, 3],
                    self.conv_w[i].clone(),
                )
                .unwrap();
            store
                .insert(
                    &format!("backbone.conv{}.bias", i + 1),
                    vec![out_c],
                    self.conv_b[i].clone(),
                )
                .unwrap();
        }
        let l = cfg.fused_len();
        store
            .insert("fuse.fc1.weight", vec![cfg.fc_hidden, l + 1], self.fuse.w1.clone())
            .unwrap();
        store
            .insert("fuse.fc1.bias", vec![cfg.fc_hidden], self.fuse.b1.clone())
            .unwrap();
        store
            .insert("fuse.fc2.weight", vec![l, cfg.fc_hidden], self.fuse.w2.clone())
            .unwrap();
        store
            .insert("fuse.fc2.bias", vec![l], self.fuse.b2.clone())
            .unwrap();
        store
            .insert("head.weight", vec![5, cfg.head_channels, 1, 1], self.head_w.clone())
            .unwrap();
        store.insert("head.bias", vec![5], self.head_b.clone()).unwrap();
        store
    }

    /// Rebuild from a store, validating every tensor shape against the
    /// config.
    pub fn from_store(store: &WeightStore, cfg: &DetectorConfig) -> Result<Self, WeightsError> {
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (i, (in_c, out_c)) in cfg.conv_plan().into_iter().enumerate() {
            conv_w.push(
                store
                    .get(&format!("backbone.conv{}.weight", i + 1), &[out_c, in_c, 3, 3])?
                    .to_vec(),
            );
            conv_b.push(
                store
                    .get(&format!("backbone.conv{}.bias", i + 1), &[out_c])?
                    .to_vec(),
            );
        }
        let l = cfg.fused_len();
        let fuse = FuseWeights::new(
            l + 1,
            cfg.fc_hidden,
            l,
            store.get("fuse.fc1.weight", &[cfg.fc_hidden, l + 1])?.to_vec(),
            store.get("fuse.fc1.bias", &[cfg.fc_hidden])?.to_vec(),
            store.get("fuse.fc2.weight", &[l, cfg.fc_hidden])?.to_vec(),
            store.get("fuse.fc2.bias", &[l])?.to_vec(),
        )
        .expect("shapes validated by get");
        Ok(Self {
            conv_w,
            conv_b,
            fuse,
            head_w: store.get("head.weight", &[5, cfg.head_channels, 1, 1])?.to_vec(),
            head_b: store.get("head.bias", &[5])?.to_vec(),
        })
    }
}

fn check_patch(patch: &ImageBuffer, cfg: &DetectorConfig) -> Result<(), DetectorError> {
    if patch.width() != cfg.input_size || patch.height() != cfg.input_size || patch.channels() != 3
    {
        return Err(DetectorError::WrongPatchShape {
            expected: cfg.input_size,
            channels: 3,
            got_w: patch.width(),
            got_h: patch.height(),
            got_c: patch.channels(),
        });
    }
    Ok(())
}

/// Run the strided backbone, returning feature maps at strides 8, 16, 32.
pub fn backbone_pyramid(
    patch: &ImageBuffer,
    cfg: &DetectorConfig,
    weights: &DetectorWeights,
) -> Result<[FeatureTensor; 3], DetectorError> {
    check_patch(patch, cfg)?;
    let plan = cfg.conv_plan();
    let mut x = FeatureTensor::from_image(patch);
    let mut taps: Vec<FeatureTensor> = Vec::with_capacity(3);
    for i in 0..5 {
        let (_, out_c) = plan[i];
        x = conv2d(&x, &weights.conv_w[i], &weights.conv_b[i], out_c, 3, 2);
        relu_inplace(&mut x);
        if i >= 2 {
            taps.push(x.clone());
        }
    }
    let s32 = taps.pop().unwrap();
    let s16 = taps.pop().unwrap();
    let s8 = taps.pop().unwrap();
    Ok([s8, s16, s32])
}

/// Flatten a feature map and append the normalized altitude scalar as the
/// final element.
pub fn concat_altitude(feat: &FeatureTensor, altitude_m: f64, normalizer: f64) -> Vec<f32> {
    let mut v = feat.data().to_vec();
    v.push((altitude_m / normalizer) as f32);
    v
}

/// Altitude fusion: flatten, concatenate altitude, map through FC1 (ReLU)
/// and FC2, reshape back to the input dimensions.
pub fn altitude_fuse(
    feat: &FeatureTensor,
    altitude_m: f64,
    cfg: &DetectorConfig,
    fuse: &FuseWeights,
) -> Result<FeatureTensor, DetectorError> {
    if !(altitude_m > 0.0 && altitude_m.is_finite()) {
        return Err(DetectorError::BadAltitude(altitude_m));
    }
    if fuse.input_len != feat.len() + 1 || fuse.out_len != feat.len() {
        return Err(DetectorError::InvalidConfig(format!(
            "fuse weights sized for {} features, got {}",
            fuse.out_len,
            feat.len()
        )));
    }
    let v = concat_altitude(feat, altitude_m, cfg.altitude_normalizer);
    let mut hidden = linear(&v, &fuse.w1, &fuse.b1);
    for h in &mut hidden {
        if *h < 0.0 {
            *h = 0.0;
        }
    }
    let out = linear(&hidden, &fuse.w2, &fuse.b2);
    Ok(FeatureTensor::from_data(
        feat.height(),
        feat.width(),
        feat.channels(),
        out,
    ))
}

/// Decode a 5-channel head map `(tx, ty, tw, th, tconf)` into detections.
///
/// Per cell: center `(cell + sigmoid(tx, ty)) * stride`, size
/// `anchor * exp(tw, th)` against the single default anchor, confidence
/// `sigmoid(tconf)`. Only cells at or above the confidence threshold emit,
/// and boxes are clamped to the patch bounds.
pub fn decode_detections(
    head: &FeatureTensor,
    cfg: &DetectorConfig,
    grid_stride: u32,
) -> Result<Vec<Detection>, DetectorError> {
    if head.channels() != 5 {
        return Err(DetectorError::WrongHeadChannels(head.channels()));
    }
    let stride = grid_stride as f64;
    let bounds_w = head.width() as f64 * stride;
    let bounds_h = head.height() as f64 * stride;
    let mut dets = Vec::new();
    for gy in 0..head.height() {
        for gx in 0..head.width() {
            let conf = sigmoid(head.get(gy, gx, 4)) as f64;
            // negated comparison also drops NaN confidences
            if !(conf >= cfg.conf_threshold) {
                continue;
            }
            let cx = (gx as f64 + sigmoid(head.get(gy, gx, 0)) as f64) * stride;
            let cy = (gy as f64 + sigmoid(head.get(gy, gx, 1)) as f64) * stride;
            let w = DEFAULT_ANCHOR.0 * (head.get(gy, gx, 2) as f64).exp();
            let h = DEFAULT_ANCHOR.1 * (head.get(gy, gx, 3) as f64).exp();
            let x_min = (cx - w / 2.0).max(0.0);
            let y_min = (cy - h / 2.0).max(0.0);
            let x_max = (cx + w / 2.0).min(bounds_w);
            let y_max = (cy + h / 2.0).min(bounds_h);
            if let Ok(rect) = PixelBox::new(x_min, y_min, x_max, y_max) {
                dets.push(Detection::new(rect, conf, 0).expect("sigmoid conf is in [0,1]"));
            }
        }
    }
    Ok(dets)
}

/// Full toy detector: backbone pyramid, optional altitude fusion on the
/// stride-32 map, 1x1 head, grid decode.
#[derive(Debug, Clone)]
pub struct ToyDetector {
    cfg: DetectorConfig,
    weights: DetectorWeights,
    use_altitude: bool,
}

impl ToyDetector {
    pub fn new(
        cfg: DetectorConfig,
        weights: DetectorWeights,
        use_altitude: bool,
    ) -> Result<Self, DetectorError> {
        cfg.validate()?;
        if weights.fuse.out_len != cfg.fused_len() {
            return Err(DetectorError::InvalidConfig(format!(
                "weights sized for {} fused features, config needs {}",
                weights.fuse.out_len,
                cfg.fused_len()
            )));
        }
        Ok(Self {
            cfg,
            weights,
            use_altitude,
        })
    }

    pub fn seeded(cfg: DetectorConfig, use_altitude: bool) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let weights = DetectorWeights::seeded(&cfg);
        Self::new(cfg, weights, use_altitude)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &DetectorWeights {
        &self.weights
    }

    /// Head logits before decoding; exposed so tests can compare forward
    /// passes exactly.
    pub fn head_logits(
        &self,
        patch: &ImageBuffer,
        altitude_m: Option<f64>,
    ) -> Result<FeatureTensor, DetectorError> {
        let [_, _, coarse] = backbone_pyramid(patch, &self.cfg, &self.weights)?;
        let fused = if self.use_altitude {
            let altitude = altitude_m.ok_or(DetectorError::MissingAltitude)?;
            altitude_fuse(&coarse, altitude, &self.cfg, &self.weights.fuse)?
        } else {
            coarse
        };
        Ok(conv2d(&fused, &self.weights.head_w, &self.weights.head_b, 5, 1, 1))
    }

    pub fn detect(
        &self,
        patch: &ImageBuffer,
        altitude_m: Option<f64>,
    ) -> Result<Vec<Detection>, DetectorError> {
        let head = self.head_logits(patch, altitude_m)?;
        decode_detections(&head, &self.cfg, 32)
    }
}
