//! Pipeline run configuration: the single JSON document that pins every
//! stage choice, threshold, and seed for a reproducible run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{CameraModel, DetectorConfig};
use crate::sr::AdapterConfig;
use crate::sr::HanConfig;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Boxes,
    Centers,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationsConfig {
    pub path: PathBuf,
    pub kind: AnnotationKind,
    /// Box edge length for center-point annotations.
    #[serde(default = "default_box_size")]
    pub box_size: u32,
}

fn default_box_size() -> u32 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum SrBackend {
    None,
    Bicubic,
    ToyHan {
        #[serde(default)]
        config: HanConfig,
        #[serde(default)]
        weights: Option<PathBuf>,
    },
    External {
        adapter: AdapterConfig,
    },
}

impl SrBackend {
    pub fn is_none(&self) -> bool {
        matches!(self, SrBackend::None)
    }

    pub fn label(&self) -> String {
        match self {
            SrBackend::None => "no-sr".into(),
            SrBackend::Bicubic => "bicubic".into(),
            SrBackend::ToyHan { .. } => "toy-han".into(),
            SrBackend::External { adapter } => {
                format!("external({})", adapter.executable.display())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorChoice {
    BlobOracle {
        #[serde(default = "default_blob_threshold")]
        threshold: f64,
        #[serde(default = "default_blob_min_area")]
        min_area: usize,
    },
    ToyNet {
        #[serde(default)]
        config: DetectorConfig,
        #[serde(default)]
        weights: Option<PathBuf>,
    },
}

fn default_blob_threshold() -> f64 {
    0.5
}

fn default_blob_min_area() -> usize {
    12
}

impl DetectorChoice {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorChoice::BlobOracle { .. } => "blob-oracle",
            DetectorChoice::ToyNet { .. } => "toy-net",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalePriorConfig {
    pub camera: CameraModel,
    #[serde(default = "default_animal_extent")]
    pub animal_extent_m: f64,
    #[serde(default = "default_band")]
    pub band: (f64, f64),
}

fn default_animal_extent() -> f64 {
    crate::detector::DEFAULT_ANIMAL_EXTENT_M
}

fn default_band() -> (f64, f64) {
    crate::detector::DEFAULT_SCALE_BAND
}

/// Evaluation thresholds; the pipeline always reports both criteria.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalThresholds {
    pub iou_threshold: f64,
    pub chebyshev_threshold: f64,
    pub conf_threshold: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            chebyshev_threshold: 200.0,
            conf_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub annotations: AnnotationsConfig,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    #[serde(default)]
    pub overlap: u32,
    /// 1 disables degradation; otherwise one of 2, 4, 8.
    #[serde(default = "default_degrade")]
    pub degrade_factor: u32,
    #[serde(default = "default_sr_backend")]
    pub sr_backend: SrBackend,
    /// Upscale factor for the SR backend. Defaults to `degrade_factor`;
    /// must be given explicitly when upscaling without degradation.
    #[serde(default)]
    pub sr_factor: Option<u32>,
    pub detector: DetectorChoice,
    #[serde(default)]
    pub use_altitude_fusion: bool,
    #[serde(default)]
    pub scale_prior: Option<ScalePriorConfig>,
    #[serde(default = "default_nms_iou")]
    pub nms_iou: f64,
    #[serde(default)]
    pub eval: EvalThresholds,
    /// Optional IoU sweep thresholds, evaluated over the same detections.
    #[serde(default)]
    pub sweep_thresholds: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_tile_size() -> u32 {
    512
}

fn default_degrade() -> u32 {
    1
}

fn default_sr_backend() -> SrBackend {
    SrBackend::None
}

fn default_nms_iou() -> f64 {
    0.5
}

fn default_threads() -> usize {
    1
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// The net upscale the SR backend applies, when one is configured.
    pub fn effective_sr_factor(&self) -> Option<u32> {
        if self.sr_backend.is_none() {
            None
        } else {
            Some(self.sr_factor.unwrap_or(self.degrade_factor))
        }
    }

    /// Patch edge length as it reaches the detector.
    pub fn detector_patch_size(&self) -> u32 {
        let degraded = self.tile_size / self.degrade_factor;
        degraded * self.effective_sr_factor().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |msg: String| Err(PipelineError::Config(msg));
        if !self.manifest.exists() {
            return cfg_err(format!("manifest {} does not exist", self.manifest.display()));
        }
        if !self.annotations.path.exists() {
            return cfg_err(format!(
                "annotations {} do not exist",
                self.annotations.path.display()
            ));
        }
        if !matches!(self.degrade_factor, 1 | 2 | 4 | 8) {
            return cfg_err(format!(
                "degrade_factor {} must be 1, 2, 4 or 8",
                self.degrade_factor
            ));
        }
        if self.tile_size == 0 {
            return cfg_err("tile_size must be positive".into());
        }
        if self.overlap >= self.tile_size {
            return cfg_err(format!(
                "overlap {} must be smaller than tile_size {}",
                self.overlap, self.tile_size
            ));
        }
        if self.tile_size % self.degrade_factor != 0 {
            return cfg_err(format!(
                "tile_size {} not divisible by degrade_factor {}",
                self.tile_size, self.degrade_factor
            ));
        }
        if !self.sr_backend.is_none() {
            if self.degrade_factor == 1 && self.sr_factor.is_none() {
                return cfg_err(
                    "sr backend configured without degradation: set sr_factor explicitly".into(),
                );
            }
            let r = self.effective_sr_factor().unwrap();
            if !matches!(r, 2 | 4 | 8) {
                return cfg_err(format!("sr factor {r} must be 2, 4 or 8"));
            }
        }
        match &self.sr_backend {
            SrBackend::ToyHan {
                weights: Some(base),
                ..
            } => {
                if !base.with_extension("json").exists() {
                    return cfg_err(format!(
                        "toy-han weights {} missing",
                        base.with_extension("json").display()
                    ));
                }
            }
            SrBackend::External { adapter } => {
                if !adapter.executable.exists() {
                    return cfg_err(format!(
                        "adapter executable {} missing",
                        adapter.executable.display()
                    ));
                }
            }
            _ => {}
        }
        match &self.detector {
            DetectorChoice::BlobOracle { threshold, min_area } => {
                if !(*threshold > 0.0 && *threshold < 1.0) {
                    return cfg_err(format!("blob threshold {threshold} outside (0, 1)"));
                }
                if *min_area == 0 {
                    return cfg_err("blob min_area must be at least 1".into());
                }
            }
            DetectorChoice::ToyNet { config, weights } => {
                config
                    .validate()
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                if config.input_size != self.detector_patch_size() {
                    return cfg_err(format!(
                        "toy-net input_size {} != patch size {} after degrade/sr",
                        config.input_size,
                        self.detector_patch_size()
                    ));
                }
                if let Some(base) = weights {
                    if !base.with_extension("json").exists() {
                        return cfg_err(format!(
                            "detector weights {} missing",
                            base.with_extension("json").display()
                        ));
                    }
                }
            }
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return cfg_err(format!("nms_iou {} outside [0, 1]", self.nms_iou));
        }
        crate::metrics::EvalConfig {
            criterion: crate::metrics::MatchCriterion::Iou,
            iou_threshold: self.eval.iou_threshold,
            chebyshev_threshold: self.eval.chebyshev_threshold,
            conf_threshold: self.eval.conf_threshold,
        }
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(thresholds) = &self.sweep_thresholds {
            if thresholds.windows(2).any(|w| w[0] > w[1]) {
                return cfg_err("sweep thresholds must be sorted ascending".into());
            }
        }
        Ok(())
    }

    /// Short human-readable method label for report tables.
    pub fn method_label(&self) -> String {
        let mut parts = vec![self.detector.label().to_string()];
        if !self.sr_backend.is_none() {
            parts.push(format!(
                "{} ×{}",
                self.sr_backend.label(),
                self.effective_sr_factor().unwrap_or(1)
            ));
        }
        if self.use_altitude_fusion {
            parts.push("altitude-fused".into());
        }
        if self.scale_prior.is_some() {
            parts.push("scale-prior".into());
        }
        parts.join(" + ")
    }

    /// Operational resolution string, e.g. `256×256 → 512×512`.
    pub fn operational_resolution(&self) -> String {
        let working = self.tile_size / self.degrade_factor;
        match self.effective_sr_factor() {
            Some(r) => format!("{working}×{working} → {}×{}", working * r, working * r),
            None => format!("{working}×{working}"),
        }
    }
}
