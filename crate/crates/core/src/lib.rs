//! Desk-scale harness for aerial wildlife detection pipelines: patch
//! tiling, resolution simulation, super-resolution backends (bicubic, a
//! toy holistic-attention network, external adapters), altitude-augmented
//! detection, and survey evaluation metrics under both IoU and Chebyshev
//! matching.

pub mod datasets;
pub mod detector;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod sr;
pub mod synth;
pub mod tensor;
pub mod tiling;
pub mod weights;
