//! Pipeline orchestration: configuration, execution, and report emission.

mod config;
mod report;
mod run;

pub use config::{
    AnnotationKind, AnnotationsConfig, DetectorChoice, EvalThresholds, PipelineConfig,
    ScalePriorConfig, SrBackend,
};
pub use report::{emit_report, markdown_report, sweep_svg, ReportFormats};
pub use run::{
    report_json, report_json_path, Artifacts, EvalReport, FrameFailure, RunReport, run_pipeline,
};

use thiserror::Error;

use crate::datasets::DataError;
use crate::detector::DetectorError;
use crate::metrics::MetricsError;
use crate::sr::SrError;
use crate::weights::WeightsError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{failed} of {total} frames aborted (first: {first})")]
    TooManyFrameFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sr(SrError),
    #[error(transparent)]
    Detector(DetectorError),
    #[error(transparent)]
    Weights(WeightsError),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl PipelineError {
    /// Process exit code contract: 2 config, 3 data, 4 stage failures,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::TooManyFrameFailures { .. } => 4,
            _ => 1,
        }
    }
}
