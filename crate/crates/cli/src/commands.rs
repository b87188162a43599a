use std::collections::HashMap;
use std::path::{Path, PathBuf};

use faunalens_core::datasets::{
    attach_altitude, load_annotations_boxes, load_annotations_centers, load_manifest,
    save_annotations_boxes, save_manifest, DataError, Frame, FrameIndex, GroundTruthBox,
};
use faunalens_core::detector::{
    blob_oracle_detect, fc_gradient_check, DetectorConfig, DetectorWeights, ToyDetector,
};
use faunalens_core::imaging::{load_image, save_image, ImageBuffer, ScaleFactor};
use faunalens_core::metrics::{
    evaluate_frames, map_sweep, EvalConfig, FrameEval, MatchCriterion,
};
use faunalens_core::pipeline::{
    emit_report, run_pipeline, Artifacts, EvalReport, PipelineConfig, ReportFormats, RunReport,
};
use faunalens_core::sr::{han_forward, upscale_bicubic, HanConfig, HanWeights};
use faunalens_core::synth::{degrade_frame, generate_scene, preset, preset_scene_configs};
use faunalens_core::tiling::{
    extract_tile, plan_tiles, read_detections_csv, write_detections_csv, Detection,
};
use faunalens_core::weights::WeightStore;

use crate::{Cli, CliError, Command, DetectorArg, KindArg, UpscaleBackend};

pub(crate) fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { ref preset, frames } => {
            cmd_synth(preset.clone(), frames, &cli)
        }
        Command::Ingest {
            ref manifest,
            ref annotations,
            kind,
            box_size,
            ref altitude,
        } => cmd_ingest(manifest, annotations, kind, box_size, altitude.as_deref()),
        Command::Tile {
            ref image,
            tile_size,
            overlap,
        } => cmd_tile(image, tile_size, overlap, &cli),
        Command::Degrade { ref input, factor } => cmd_degrade(input, factor, &cli),
        Command::Upscale {
            ref input,
            scale,
            backend,
            ref weights,
        } => cmd_upscale(input, scale, backend, weights.as_deref(), &cli),
        Command::Detect {
            ref manifest,
            ref image,
            detector,
            threshold,
            min_area,
            ref weights,
            altitude,
            altitude_fusion,
        } => cmd_detect(
            manifest.as_deref(),
            image.as_deref(),
            detector,
            threshold,
            min_area,
            weights.as_deref(),
            altitude,
            altitude_fusion,
            &cli,
        ),
        Command::Eval {
            ref detections,
            ref manifest,
            ref annotations,
            kind,
            box_size,
            iou_threshold,
            chebyshev_threshold,
            conf_threshold,
        } => cmd_eval(
            detections,
            manifest,
            annotations,
            kind,
            box_size,
            iou_threshold,
            chebyshev_threshold,
            conf_threshold,
            None,
            &cli,
        ),
        Command::Sweep {
            ref detections,
            ref manifest,
            ref annotations,
            kind,
            box_size,
            ref thresholds,
            conf_threshold,
        } => {
            let parsed = parse_thresholds(thresholds.as_deref())?;
            cmd_eval(
                detections,
                manifest,
                annotations,
                kind,
                box_size,
                0.3,
                200.0,
                conf_threshold,
                Some(parsed),
                &cli,
            )
        }
        Command::Run => cmd_run(&cli),
        Command::Report { ref report } => cmd_report(report, &cli),
        Command::GradCheck => cmd_grad_check(cli.seed.unwrap_or(7)),
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    cli.out
        .clone()
        .ok_or_else(|| CliError::config("--out <dir> is required for this command"))
}

fn out_file(cli: &Cli) -> Result<PathBuf, CliError> {
    cli.out
        .clone()
        .ok_or_else(|| CliError::config("--out <file> is required for this command"))
}

fn data_err(e: DataError) -> CliError {
    CliError::data(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::data(e.to_string())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn load_gt(
    annotations: &Path,
    kind: KindArg,
    box_size: u32,
    index: &FrameIndex,
) -> Result<Vec<GroundTruthBox>, CliError> {
    match kind {
        KindArg::Boxes => load_annotations_boxes(annotations, Some(index)).map_err(data_err),
        KindArg::Centers => {
            load_annotations_centers(annotations, box_size, Some(index)).map_err(data_err)
        }
    }
}

fn parse_thresholds(spec: Option<&str>) -> Result<Vec<f64>, CliError> {
    match spec {
        None => Ok((1..=9).map(|i| i as f64 / 10.0).collect()),
        Some(text) => {
            let mut out = Vec::new();
            for token in text.split(',') {
                let v: f64 = token
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("bad threshold {token:?}")))?;
                out.push(v);
            }
            if out.windows(2).any(|w| w[0] > w[1]) {
                return Err(CliError::config("thresholds must be sorted ascending"));
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

fn cmd_synth(preset_name: String, n_frames: usize, cli: &Cli) -> Result<(), CliError> {
    let preset = preset(&preset_name).ok_or_else(|| {
        CliError::config(format!(
            "unknown preset {preset_name:?}; available: {}",
            faunalens_core::synth::preset_names().join(", ")
        ))
    })?;
    let out = out_dir(cli)?;
    let images_dir = out.join("images");
    ensure_dir(&images_dir)?;
    let seed = cli.seed.unwrap_or(0);
    let configs = preset_scene_configs(&preset, n_frames, seed);

    let mut frames = Vec::with_capacity(n_frames);
    let mut gt = Vec::new();
    for (i, scene_cfg) in configs.iter().enumerate() {
        let frame_id = format!("frame-{i:03}");
        let scene = generate_scene(scene_cfg, &frame_id)
            .map_err(|e| CliError::new(1, e.to_string()))?;
        let rel = PathBuf::from("images").join(format!("{frame_id}.ppm"));
        save_image(&scene.image, &out.join(&rel)).map_err(io_err)?;
        frames.push(Frame {
            frame_id,
            image_path: rel,
            altitude_m: Some(scene.altitude_m as f32),
            width: scene_cfg.frame_w,
            height: scene_cfg.frame_h,
            camera: None,
        });
        gt.extend(scene.gt);
    }
    save_manifest(&out.join("manifest.json"), &frames).map_err(data_err)?;
    save_annotations_boxes(&out.join("annotations.csv"), &gt).map_err(data_err)?;
    println!(
        "wrote {} frames, {} ground-truth boxes to {} (preset {}, seed {seed})",
        frames.len(),
        gt.len(),
        out.display(),
        preset.name
    );
    println!(
        "suggested blob oracle: threshold {}, min_area {}",
        preset.blob_threshold, preset.blob_min_area
    );
    Ok(())
}

fn cmd_ingest(
    manifest: &Path,
    annotations: &Path,
    kind: KindArg,
    box_size: u32,
    altitude: Option<&Path>,
) -> Result<(), CliError> {
    let mut frames = load_manifest(manifest).map_err(data_err)?;
    if let Some(meta) = altitude {
        frames = attach_altitude(frames, meta).map_err(data_err)?;
    }
    let index = FrameIndex::from_frames(&frames);
    let gt = load_gt(annotations, kind, box_size, &index)?;
    let with_altitude = frames.iter().filter(|f| f.altitude_m.is_some()).count();
    let mean_area = if gt.is_empty() {
        0.0
    } else {
        gt.iter().map(|b| b.rect.area()).sum::<f64>() / gt.len() as f64
    };
    println!(
        "{} frames ({} with altitude), {} annotations, mean box area {:.1} px^2",
        frames.len(),
        with_altitude,
        gt.len(),
        mean_area
    );
    Ok(())
}

fn cmd_tile(image: &Path, tile_size: u32, overlap: u32, cli: &Cli) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    ensure_dir(&out)?;
    let frame = load_image(image).map_err(io_err)?;
    let grid = plan_tiles(frame.width(), frame.height(), tile_size, overlap)
        .map_err(|e| CliError::config(e.to_string()))?;
    for &(x, y) in grid.tiles() {
        let tile = extract_tile(&frame, (x, y), tile_size)
            .map_err(|e| CliError::new(1, e.to_string()))?;
        save_image(&tile, &out.join(format!("tile_{x}_{y}.ppm"))).map_err(io_err)?;
    }
    let grid_json =
        serde_json::to_string_pretty(&grid).expect("grid serializes");
    std::fs::write(out.join("grid.json"), grid_json).map_err(io_err)?;
    println!("wrote {} tiles to {}", grid.len(), out.display());
    Ok(())
}

fn cmd_degrade(input: &Path, factor: u32, cli: &Cli) -> Result<(), CliError> {
    let out = out_file(cli)?;
    let img = load_image(input).map_err(io_err)?;
    let scale = ScaleFactor::new(factor as f64).map_err(|e| CliError::config(e.to_string()))?;
    let degraded = degrade_frame(&img, scale).map_err(|e| CliError::config(e.to_string()))?;
    save_image(&degraded, &out).map_err(io_err)?;
    println!(
        "degraded {} -> {} ({}x{})",
        input.display(),
        out.display(),
        degraded.width(),
        degraded.height()
    );
    Ok(())
}

fn cmd_upscale(
    input: &Path,
    scale: u32,
    backend: UpscaleBackend,
    weights: Option<&Path>,
    cli: &Cli,
) -> Result<(), CliError> {
    let out = out_file(cli)?;
    let img = load_image(input).map_err(io_err)?;
    let r = ScaleFactor::new(scale as f64).map_err(|e| CliError::config(e.to_string()))?;
    let upscaled = match backend {
        UpscaleBackend::Bicubic => {
            upscale_bicubic(&img, r).map_err(|e| CliError::config(e.to_string()))?
        }
        UpscaleBackend::ToyHan => {
            let cfg = HanConfig {
                scale: r,
                seed: cli.seed.unwrap_or(0),
                ..HanConfig::default()
            };
            let w = match weights {
                Some(base) => {
                    let store = WeightStore::load(base).map_err(|e| CliError::data(e.to_string()))?;
                    HanWeights::from_store(&store, &cfg)
                        .map_err(|e| CliError::config(e.to_string()))?
                }
                None => HanWeights::seeded(&cfg).map_err(|e| CliError::config(e.to_string()))?,
            };
            han_forward(&img, &cfg, &w).map_err(|e| CliError::new(1, e.to_string()))?
        }
    };
    save_image(&upscaled, &out).map_err(io_err)?;
    println!(
        "upscaled {} -> {} ({}x{})",
        input.display(),
        out.display(),
        upscaled.width(),
        upscaled.height()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect(
    manifest: Option<&Path>,
    image: Option<&Path>,
    detector: DetectorArg,
    threshold: f64,
    min_area: usize,
    weights: Option<&Path>,
    altitude: Option<f64>,
    altitude_fusion: bool,
    cli: &Cli,
) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    ensure_dir(&out)?;

    let toy_net = |input_size: u32| -> Result<ToyDetector, CliError> {
        let cfg = DetectorConfig {
            input_size,
            seed: cli.seed.unwrap_or(0),
            ..DetectorConfig::default()
        };
        let w = match weights {
            Some(base) => {
                let store = WeightStore::load(base).map_err(|e| CliError::data(e.to_string()))?;
                DetectorWeights::from_store(&store, &cfg)
                    .map_err(|e| CliError::config(e.to_string()))?
            }
            None => DetectorWeights::seeded(&cfg),
        };
        ToyDetector::new(cfg, w, altitude_fusion).map_err(|e| CliError::config(e.to_string()))
    };

    let detect_one = |img: &ImageBuffer, alt: Option<f64>| -> Result<Vec<Detection>, CliError> {
        match detector {
            DetectorArg::Blob => blob_oracle_detect(img, threshold, min_area)
                .map_err(|e| CliError::config(e.to_string())),
            DetectorArg::ToyNet => {
                let net = toy_net(img.width())?;
                net.detect(img, alt).map_err(|e| CliError::new(1, e.to_string()))
            }
        }
    };

    let mut rows: Vec<(String, Detection)> = Vec::new();
    match (manifest, image) {
        (Some(manifest), None) => {
            let frames = load_manifest(manifest).map_err(data_err)?;
            for frame in &frames {
                let img = load_image(&frame.image_path).map_err(io_err)?;
                let dets = detect_one(&img, frame.altitude_m.map(f64::from))?;
                rows.extend(dets.into_iter().map(|d| (frame.frame_id.clone(), d)));
            }
        }
        (None, Some(image_path)) => {
            let img = load_image(image_path).map_err(io_err)?;
            let frame_id = image_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            rows.extend(detect_one(&img, altitude)?.into_iter().map(|d| (frame_id.clone(), d)));
        }
        _ => return Err(CliError::config("pass exactly one of --manifest or --image")),
    }
    let csv_path = out.join("detections.csv");
    write_detections_csv(&csv_path, &rows).map_err(io_err)?;
    println!("wrote {} detections to {}", rows.len(), csv_path.display());
    Ok(())
}

/// Build per-frame eval inputs from a detections CSV and ground truth.
fn assemble_frame_evals(
    detections: &Path,
    frames: &[Frame],
    gt: &[GroundTruthBox],
) -> Result<Vec<FrameEval>, CliError> {
    let known: HashMap<&str, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_id.as_str(), i))
        .collect();
    let rows = read_detections_csv(detections).map_err(|e| CliError::data(e.to_string()))?;
    let mut dets_by_frame: Vec<Vec<Detection>> = vec![Vec::new(); frames.len()];
    for (frame_id, det) in rows {
        let &idx = known.get(frame_id.as_str()).ok_or_else(|| {
            CliError::data(format!("detections reference unknown frame {frame_id:?}"))
        })?;
        dets_by_frame[idx].push(det);
    }
    let mut gts_by_frame: Vec<Vec<_>> = vec![Vec::new(); frames.len()];
    for b in gt {
        if let Some(&idx) = known.get(b.frame_id.as_str()) {
            gts_by_frame[idx].push(b.rect);
        }
    }
    Ok(frames
        .iter()
        .zip(dets_by_frame.into_iter().zip(gts_by_frame))
        .map(|(frame, (dets, gts))| FrameEval {
            frame_id: frame.frame_id.clone(),
            dets,
            gts,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    detections: &Path,
    manifest: &Path,
    annotations: &Path,
    kind: KindArg,
    box_size: u32,
    iou_threshold: f64,
    chebyshev_threshold: f64,
    conf_threshold: f64,
    sweep: Option<Vec<f64>>,
    cli: &Cli,
) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let frames = load_manifest(manifest).map_err(data_err)?;
    let index = FrameIndex::from_frames(&frames);
    let gt = load_gt(annotations, kind, box_size, &index)?;
    let inputs = assemble_frame_evals(detections, &frames, &gt)?;

    let base = EvalConfig {
        criterion: MatchCriterion::Iou,
        iou_threshold,
        chebyshev_threshold,
        conf_threshold,
    };
    let iou_eval =
        evaluate_frames(&inputs, &base).map_err(|e| CliError::config(e.to_string()))?;
    let che_eval = evaluate_frames(
        &inputs,
        &EvalConfig {
            criterion: MatchCriterion::Chebyshev,
            ..base
        },
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    let sweep_points = match sweep {
        Some(thresholds) => Some(
            map_sweep(&inputs, &thresholds, &base)
                .map_err(|e| CliError::config(e.to_string()))?,
        ),
        None => None,
    };

    let mut report = RunReport {
        method: format!("eval({})", detections.display()),
        operational_resolution: "as-provided".to_string(),
        config: None,
        frames_evaluated: inputs.len(),
        frames_failed: 0,
        failures: Vec::new(),
        eval: EvalReport {
            iou: iou_eval,
            chebyshev: che_eval,
            sweep: sweep_points,
        },
        notes: vec!["Single-class evaluation: mAP equals the one class's AP.".to_string()],
        reference_training: faunalens_core::detector::training::REFERENCE_TRAINING,
        artifacts: Artifacts::default(),
    };
    emit_report(&mut report, &out, &ReportFormats::default())
        .map_err(|e| CliError::new(e.exit_code() as u8, e.to_string()))?;
    println!(
        "mAP(IoU@{}) {:.4}  mAP(Che@{}) {:.4}  -> {}",
        report.eval.iou.threshold,
        report.eval.iou.ap,
        report.eval.chebyshev.threshold,
        report.eval.chebyshev.ap,
        out.display()
    );
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <pipeline.json> is required for run"))?;
    let mut cfg = PipelineConfig::load(config_path)
        .map_err(|e| CliError::new(e.exit_code() as u8, e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    let mut report =
        run_pipeline(&cfg).map_err(|e| CliError::new(e.exit_code() as u8, e.to_string()))?;
    let out = cfg.output_dir.clone();
    emit_report(&mut report, &out, &ReportFormats::default())
        .map_err(|e| CliError::new(e.exit_code() as u8, e.to_string()))?;
    println!(
        "{} | {} | mAP(IoU) {:.4} | mAP(Che) {:.4} | frames {} (failed {}) -> {}",
        report.method,
        report.operational_resolution,
        report.eval.iou.ap,
        report.eval.chebyshev.ap,
        report.frames_evaluated,
        report.frames_failed,
        out.display()
    );
    Ok(())
}

fn cmd_report(report_path: &Path, cli: &Cli) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let text = std::fs::read_to_string(report_path).map_err(io_err)?;
    let mut report: RunReport =
        serde_json::from_str(&text).map_err(|e| CliError::data(e.to_string()))?;
    let files = emit_report(&mut report, &out, &ReportFormats::default())
        .map_err(|e| CliError::new(e.exit_code() as u8, e.to_string()))?;
    println!("re-emitted {} files to {}", files.len(), out.display());
    Ok(())
}

fn cmd_grad_check(seed: u64) -> Result<(), CliError> {
    let report = fc_gradient_check(seed);
    println!(
        "gradient check (seed {seed}): max relative error {:.3e} over {} parameters",
        report.max_relative_error, report.params_checked
    );
    println!(
        "loss {:.6}, altitude gradient {:.6}",
        report.loss, report.altitude_gradient
    );
    if report.max_relative_error < 1e-4 {
        println!("PASS (tolerance 1e-4)");
        Ok(())
    } else {
        Err(CliError::new(
            1,
            format!(
                "gradient check failed: {:.3e} >= 1e-4",
                report.max_relative_error
            ),
        ))
    }
}
