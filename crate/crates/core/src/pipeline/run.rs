//! End-to-end pipeline execution: tile, degrade, super-resolve, detect,
//! remap, merge, filter, evaluate.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    load_annotations_boxes, load_annotations_centers, load_manifest, Frame, FrameIndex,
    GroundTruthBox,
};
use crate::detector::{
    blob_oracle_detect, scale_prior_filter, training, DetectorWeights, ToyDetector,
};
use crate::geometry::PixelBox;
use crate::imaging::{load_image, save_image, ImageBuffer, ScaleFactor};
use crate::metrics::{
    evaluate_frames, map_sweep, CriterionEval, EvalConfig, FrameEval, MatchCriterion, SweepPoint,
};
use crate::sr::{external_upscale, han_forward, upscale_bicubic, HanConfig, HanWeights};
use crate::synth::degrade_frame;
use crate::tiling::{extract_tile, merge_frame_detections, plan_tiles, remap_detections, Detection};
use crate::weights::WeightStore;

use super::config::{AnnotationKind, DetectorChoice, PipelineConfig, SrBackend};
use super::PipelineError;

/// Fraction of frames that may abort before the whole run fails.
const MAX_FRAME_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub stage: String,
    pub message: String,
}

/// Both-criteria evaluation plus the optional threshold sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou: CriterionEval,
    pub chebyshev: CriterionEval,
    pub sweep: Option<Vec<SweepPoint>>,
}

/// Files written beside the JSON report; filled in by the emitter.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Artifacts {
    pub sweep_svg: Option<String>,
}

/// The full machine-readable run report. Everything needed to reproduce
/// the run (config and seed included) is embedded; no timestamps, so
/// identical runs serialize byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub operational_resolution: String,
    /// The resolved pipeline config; absent for CSV-based evaluations.
    pub config: Option<PipelineConfig>,
    pub frames_evaluated: usize,
    pub frames_failed: usize,
    pub failures: Vec<FrameFailure>,
    pub eval: EvalReport,
    pub notes: Vec<String>,
    pub reference_training: training::TrainingConfig,
    #[serde(default)]
    pub artifacts: Artifacts,
}

enum DetectorRuntime {
    Blob { threshold: f64, min_area: usize },
    Net(Box<ToyDetector>),
}

struct SrRuntime {
    backend: SrBackendRuntime,
    factor: u32,
}

enum SrBackendRuntime {
    None,
    Bicubic,
    ToyHan {
        cfg: HanConfig,
        weights: Box<HanWeights>,
    },
    External(crate::sr::AdapterConfig),
}

static SCRATCH_SEQ: AtomicU64 = AtomicU64::new(0);

fn build_sr_runtime(cfg: &PipelineConfig) -> Result<SrRuntime, PipelineError> {
    let factor = cfg.effective_sr_factor().unwrap_or(1);
    let backend = match &cfg.sr_backend {
        SrBackend::None => SrBackendRuntime::None,
        SrBackend::Bicubic => SrBackendRuntime::Bicubic,
        SrBackend::ToyHan { config, weights } => {
            let mut han_cfg = *config;
            han_cfg.scale = ScaleFactor::new(factor as f64).expect("validated factor");
            let w = match weights {
                Some(base) => {
                    let store = WeightStore::load(base).map_err(PipelineError::Weights)?;
                    HanWeights::from_store(&store, &han_cfg).map_err(PipelineError::Sr)?
                }
                None => HanWeights::seeded(&han_cfg).map_err(PipelineError::Sr)?,
            };
            SrBackendRuntime::ToyHan {
                cfg: han_cfg,
                weights: Box::new(w),
            }
        }
        SrBackend::External { adapter } => SrBackendRuntime::External(adapter.clone()),
    };
    Ok(SrRuntime { backend, factor })
}

fn build_detector_runtime(cfg: &PipelineConfig) -> Result<DetectorRuntime, PipelineError> {
    Ok(match &cfg.detector {
        DetectorChoice::BlobOracle { threshold, min_area } => DetectorRuntime::Blob {
            threshold: *threshold,
            min_area: *min_area,
        },
        DetectorChoice::ToyNet { config, weights } => {
            let w = match weights {
                Some(base) => {
                    let store = WeightStore::load(base).map_err(PipelineError::Weights)?;
                    DetectorWeights::from_store(&store, config).map_err(PipelineError::Weights)?
                }
                None => DetectorWeights::seeded(config),
            };
            DetectorRuntime::Net(Box::new(
                ToyDetector::new(*config, w, cfg.use_altitude_fusion)
                    .map_err(PipelineError::Detector)?,
            ))
        }
    })
}

fn sr_apply(sr: &SrRuntime, patch: &ImageBuffer) -> Result<ImageBuffer, String> {
    let r = ScaleFactor::new(sr.factor as f64).expect("positive");
    match &sr.backend {
        SrBackendRuntime::None => Ok(patch.clone()),
        SrBackendRuntime::Bicubic => upscale_bicubic(patch, r).map_err(|e| e.to_string()),
        SrBackendRuntime::ToyHan { cfg, weights } => {
            han_forward(patch, cfg, weights).map_err(|e| e.to_string())
        }
        SrBackendRuntime::External(adapter) => {
            let seq = SCRATCH_SEQ.fetch_add(1, Ordering::Relaxed);
            let path = std::env::temp_dir().join(format!(
                "faunalens-patch-{}-{}.ppm",
                std::process::id(),
                seq
            ));
            save_image(patch, &path).map_err(|e| e.to_string())?;
            let result = external_upscale(&path, r, adapter).map_err(|e| e.to_string());
            let _ = std::fs::remove_file(&path);
            result
        }
    }
}

fn process_frame(
    frame: &Frame,
    cfg: &PipelineConfig,
    sr: &SrRuntime,
    detector: &DetectorRuntime,
) -> Result<Vec<Detection>, FrameFailure> {
    let fail = |stage: &str, message: String| FrameFailure {
        frame_id: frame.frame_id.clone(),
        stage: stage.to_string(),
        message,
    };
    let image = load_image(&frame.image_path).map_err(|e| fail("load", e.to_string()))?;
    if image.width() != frame.width || image.height() != frame.height {
        return Err(fail(
            "load",
            format!(
                "image is {}x{}, manifest says {}x{}",
                image.width(),
                image.height(),
                frame.width,
                frame.height
            ),
        ));
    }
    let grid = plan_tiles(frame.width, frame.height, cfg.tile_size, cfg.overlap)
        .map_err(|e| fail("tile", e.to_string()))?;

    let altitude = frame.altitude_m.map(f64::from);
    // net pixel scale between the detected patch and original frame coords
    let up = if matches!(sr.backend, SrBackendRuntime::None) {
        1
    } else {
        sr.factor
    };
    let net_scale = up as f64 / cfg.degrade_factor as f64;
    let remap_factor = ScaleFactor::new(net_scale).expect("positive scale");

    let mut collected = Vec::new();
    for &origin in grid.tiles() {
        let tile =
            extract_tile(&image, origin, cfg.tile_size).map_err(|e| fail("tile", e.to_string()))?;
        let working = if cfg.degrade_factor > 1 {
            degrade_frame(&tile, ScaleFactor::new(cfg.degrade_factor as f64).unwrap())
                .map_err(|e| fail("degrade", e.to_string()))?
        } else {
            tile
        };
        let enhanced = sr_apply(sr, &working).map_err(|e| fail("sr", e))?;
        let patch_dets = match detector {
            DetectorRuntime::Blob { threshold, min_area } => {
                blob_oracle_detect(&enhanced, *threshold, *min_area)
                    .map_err(|e| fail("detect", e.to_string()))?
            }
            DetectorRuntime::Net(net) => net
                .detect(&enhanced, altitude)
                .map_err(|e| fail("detect", e.to_string()))?,
        };
        collected.extend(remap_detections(&patch_dets, origin, remap_factor));
    }
    let mut merged = merge_frame_detections(collected, cfg.nms_iou)
        .map_err(|e| fail("merge", e.to_string()))?;
    if let Some(prior) = &cfg.scale_prior {
        let altitude = altitude
            .ok_or_else(|| fail("scale-prior", "frame carries no altitude".to_string()))?;
        merged = scale_prior_filter(
            &merged,
            altitude,
            &prior.camera,
            prior.animal_extent_m,
            prior.band,
        )
        .map_err(|e| fail("scale-prior", e.to_string()))?;
    }
    Ok(merged)
}

fn load_ground_truth(
    cfg: &PipelineConfig,
    index: &FrameIndex,
) -> Result<Vec<GroundTruthBox>, PipelineError> {
    let boxes = match cfg.annotations.kind {
        AnnotationKind::Boxes => load_annotations_boxes(&cfg.annotations.path, Some(index))?,
        AnnotationKind::Centers => {
            load_annotations_centers(&cfg.annotations.path, cfg.annotations.box_size, Some(index))?
        }
    };
    Ok(boxes)
}

/// Run the full pipeline described by the config and return the report.
///
/// Frame-level errors abort the frame (recorded in the report); the run
/// fails when more than 10% of frames abort. Results are independent of
/// the thread count: per-frame outputs are reduced in manifest order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let frames = load_manifest(&cfg.manifest)?;
    let index = FrameIndex::from_frames(&frames);
    let gt = load_ground_truth(cfg, &index)?;
    let mut gt_by_frame: HashMap<&str, Vec<PixelBox>> = HashMap::new();
    for b in &gt {
        gt_by_frame.entry(b.frame_id.as_str()).or_default().push(b.rect);
    }

    let sr = build_sr_runtime(cfg)?;
    let detector = build_detector_runtime(cfg)?;

    let run_frames = |frames: &[Frame]| -> Vec<Result<Vec<Detection>, FrameFailure>> {
        frames
            .par_iter()
            .map(|frame| process_frame(frame, cfg, &sr, &detector))
            .collect()
    };
    let results: Vec<Result<Vec<Detection>, FrameFailure>> = if cfg.threads == 0 {
        run_frames(&frames)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        pool.install(|| run_frames(&frames))
    };

    let mut failures = Vec::new();
    let mut eval_inputs = Vec::new();
    for (frame, result) in frames.iter().zip(results) {
        match result {
            Ok(dets) => eval_inputs.push(FrameEval {
                frame_id: frame.frame_id.clone(),
                dets,
                gts: gt_by_frame.remove(frame.frame_id.as_str()).unwrap_or_default(),
            }),
            Err(failure) => failures.push(failure),
        }
    }
    if !frames.is_empty()
        && failures.len() as f64 > MAX_FRAME_FAILURE_FRACTION * frames.len() as f64
    {
        return Err(PipelineError::TooManyFrameFailures {
            failed: failures.len(),
            total: frames.len(),
            first: failures
                .first()
                .map(|f| format!("{} [{}]: {}", f.frame_id, f.stage, f.message))
                .unwrap_or_default(),
        });
    }

    let base_eval = EvalConfig {
        criterion: MatchCriterion::Iou,
        iou_threshold: cfg.eval.iou_threshold,
        chebyshev_threshold: cfg.eval.chebyshev_threshold,
        conf_threshold: cfg.eval.conf_threshold,
    };
    let iou_eval = evaluate_frames(&eval_inputs, &base_eval)?;
    let che_eval = evaluate_frames(
        &eval_inputs,
        &EvalConfig {
            criterion: MatchCriterion::Chebyshev,
            ..base_eval
        },
    )?;
    let sweep = match &cfg.sweep_thresholds {
        Some(thresholds) if !thresholds.is_empty() => {
            Some(map_sweep(&eval_inputs, thresholds, &base_eval)?)
        }
        _ => None,
    };

    Ok(RunReport {
        method: cfg.method_label(),
        operational_resolution: cfg.operational_resolution(),
        config: Some(cfg.clone()),
        frames_evaluated: eval_inputs.len(),
        frames_failed: failures.len(),
        failures,
        eval: EvalReport {
            iou: iou_eval,
            chebyshev: che_eval,
            sweep,
        },
        notes: standard_notes(),
        reference_training: training::REFERENCE_TRAINING,
        artifacts: Artifacts::default(),
    })
}

fn standard_notes() -> Vec<String> {
    vec![
        "Single-class evaluation: mAP equals the one class's AP.".to_string(),
        "Chebyshev matching is greedy one-to-one by descending confidence; \
         distances are measured in original frame coordinates after remapping."
            .to_string(),
        "Chebyshev acceptance is inclusive (distance <= threshold); box scale is ignored."
            .to_string(),
    ]
}

/// Serialize a report exactly as `emit_report` writes it.
pub fn report_json(report: &RunReport) -> String {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    json
}

/// Where the JSON report lands inside an output directory.
pub fn report_json_path(out_dir: &std::path::Path) -> PathBuf {
    out_dir.join("report.json")
}
