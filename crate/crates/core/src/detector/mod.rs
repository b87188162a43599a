//! Detection-side components: the altitude-augmented toy network, the
//! altitude/ground-sampling-distance scale prior, and a deterministic
//! blob-oracle detector for weight-free end-to-end runs.

mod blob;
mod gradcheck;
mod net;
mod prior;

pub use blob::blob_oracle_detect;
pub use gradcheck::{fc_gradient_check, FcCheckInstance, GradCheckReport};
pub use net::{
    altitude_fuse, backbone_pyramid, concat_altitude, decode_detections, DetectorConfig,
    DetectorWeights, FuseWeights, ToyDetector, DEFAULT_ANCHOR, PYRAMID_STRIDES,
};
pub use prior::{
    gsd, scale_prior_filter, CameraModel, DEFAULT_ANIMAL_EXTENT_M, DEFAULT_SCALE_BAND,
};

use thiserror::Error;

use crate::weights::WeightsError;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("altitude must be a positive finite number, got {0}")]
    BadAltitude(f64),
    #[error("expected {expected}x{expected}x{channels} patch, got {got_w}x{got_h}x{got_c}")]
    WrongPatchShape {
        expected: u32,
        channels: u8,
        got_w: u32,
        got_h: u32,
        got_c: u8,
    },
    #[error("detection head must have 5 channels per cell, got {0}")]
    WrongHeadChannels(usize),
    #[error("scale-prior band ({lo}, {hi}) invalid: need 0 < lo < hi")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("altitude fusion enabled but the frame carries no altitude")]
    MissingAltitude,
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

/// Reference training regimen for the full-scale system, recorded so run
/// reports can state it. The harness consumes weights; it does not train.
pub mod training {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    pub enum Optimizer {
        Adam,
        Sgd,
    }

    #[derive(Debug, Clone, Copy, Serialize, Deserialize)]
    pub struct SrTraining {
        pub optimizer: Optimizer,
        pub learning_rate: f64,
        pub lr_decay: f64,
        pub beta1: f64,
        pub beta2: f64,
        pub epsilon: f64,
        pub weight_decay: f64,
        pub epochs: u32,
    }

    #[derive(Debug, Clone, Copy, Serialize, Deserialize)]
    pub struct DetectorTraining {
        pub optimizer: Optimizer,
        pub learning_rate: f64,
        pub weight_decay: f64,
        pub momentum: f64,
        pub epochs: u32,
    }

    #[derive(Debug, Clone, Copy, Serialize, Deserialize)]
    pub struct TrainingConfig {
        pub sr: SrTraining,
        pub detector: DetectorTraining,
    }

    pub const REFERENCE_TRAINING: TrainingConfig = TrainingConfig {
        sr: SrTraining {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-4,
            lr_decay: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
            epochs: 50,
        },
        detector: DetectorTraining {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            momentum: 0.9,
            epochs: 1000,
        },
    };
}
