//! Dataset ingestion: box and center-point annotation CSVs, altitude
//! metadata, frame manifests, and deterministic train/val/test splits.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::CameraModel;
use crate::geometry::PixelBox;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
    #[error("{path}: {} invalid row(s): {}", problems.len(), format_problems(problems))]
    Rows {
        path: String,
        problems: Vec<RowProblem>,
    },
    #[error("altitude metadata missing frame(s): {}", frame_ids.join(", "))]
    MissingAltitude { frame_ids: Vec<String> },
    #[error("conflicting altitude for {frame_id}: {a} vs {b}")]
    ConflictingAltitude { frame_id: String, a: f32, b: f32 },
    #[error("duplicate frame_id {0:?}")]
    DuplicateFrameId(String),
    #[error("cannot split an empty frame list")]
    EmptyFrameList,
    #[error("split ratios must be non-negative and sum to 1, got ({0}, {1}, {2})")]
    BadRatios(f64, f64, f64),
}

#[derive(Debug, Clone)]
pub struct RowProblem {
    pub row: usize,
    pub reason: String,
}

fn format_problems(problems: &[RowProblem]) -> String {
    problems
        .iter()
        .take(5)
        .map(|p| format!("row {}: {}", p.row, p.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One survey frame: an image on disk plus capture metadata.
///
/// Altitude is stored at 32-bit precision, matching how capture rigs
/// record it.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub image_path: PathBuf,
    pub altitude_m: Option<f32>,
    pub width: u32,
    pub height: u32,
    pub camera: Option<CameraModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame_id: String,
    pub rect: PixelBox,
    pub class_id: u32,
}

/// Frame-level split; the three sets are disjoint and exhaustive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Lookup of frame dimensions used to validate and clamp annotations.
#[derive(Debug, Default, Clone)]
pub struct FrameIndex {
    dims: HashMap<String, (u32, u32)>,
}

impl FrameIndex {
    pub fn from_frames(frames: &[Frame]) -> Self {
        Self {
            dims: frames
                .iter()
                .map(|f| (f.frame_id.clone(), (f.width, f.height)))
                .collect(),
        }
    }

    pub fn dims(&self, frame_id: &str) -> Option<(u32, u32)> {
        self.dims.get(frame_id).copied()
    }
}

// ---------------------------------------------------------------------------
// Annotation CSVs
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BoxRow {
    frame_id: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    class_id: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CenterRow {
    frame_id: String,
    cx: f64,
    cy: f64,
    class_id: u32,
}

/// Validate a parsed box against the optional frame index, clamping boxes
/// that stick out of the frame rather than dropping them.
fn finish_box(
    frame_id: String,
    rect: PixelBox,
    class_id: u32,
    index: Option<&FrameIndex>,
) -> Result<GroundTruthBox, String> {
    let rect = match index {
        Some(idx) => {
            let (w, h) = idx
                .dims(&frame_id)
                .ok_or_else(|| format!("unknown frame_id {frame_id:?}"))?;
            rect.clamp_to(w as f64, h as f64)
                .ok_or_else(|| format!("box lies entirely outside frame {frame_id:?}"))?
        }
        None => rect,
    };
    Ok(GroundTruthBox {
        frame_id,
        rect,
        class_id,
    })
}

fn collect_rows<R, T>(
    path: &Path,
    parse: impl Fn(R) -> Result<T, String>,
) -> Result<Vec<T>, DataError>
where
    R: for<'de> Deserialize<'de>,
{
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, record) in reader.deserialize::<R>().enumerate() {
        let row = i + 2; // 1-based, after the header row
        match record {
            Ok(raw) => match parse(raw) {
                Ok(value) => out.push(value),
                Err(reason) => problems.push(RowProblem { row, reason }),
            },
            Err(e) => problems.push(RowProblem {
                row,
                reason: e.to_string(),
            }),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(DataError::Rows {
            path: path.display().to_string(),
            problems,
        })
    }
}

/// Load tight box annotations (`frame_id,x_min,y_min,x_max,y_max,class_id`).
pub fn load_annotations_boxes(
    path: &Path,
    index: Option<&FrameIndex>,
) -> Result<Vec<GroundTruthBox>, DataError> {
    collect_rows(path, |row: BoxRow| {
        let rect = PixelBox::new(row.x_min, row.y_min, row.x_max, row.y_max)
            .map_err(|e| e.to_string())?;
        finish_box(row.frame_id, rect, row.class_id, index)
    })
}

/// Load center-point annotations (`frame_id,cx,cy,class_id`), expanding each
/// center to an approximate box of `box_size x box_size` pixels.
///
/// The integer split is `[c - floor(s/2), c + ceil(s/2))`, so even sizes are
/// symmetric and odd sizes put the extra pixel on the high side.
pub fn load_annotations_centers(
    path: &Path,
    box_size: u32,
    index: Option<&FrameIndex>,
) -> Result<Vec<GroundTruthBox>, DataError> {
    let lo = (box_size / 2) as f64;
    let hi = (box_size - box_size / 2) as f64;
    collect_rows(path, |row: CenterRow| {
        let rect = PixelBox::new(row.cx - lo, row.cy - lo, row.cx + hi, row.cy + hi)
            .map_err(|e| e.to_string())?;
        finish_box(row.frame_id, rect, row.class_id, index)
    })
}

/// Write box annotations in the same schema `load_annotations_boxes` reads.
pub fn save_annotations_boxes(path: &Path, boxes: &[GroundTruthBox]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    for b in boxes {
        writer
            .serialize(BoxRow {
                frame_id: b.frame_id.clone(),
                x_min: b.rect.x_min(),
                y_min: b.rect.y_min(),
                x_max: b.rect.x_max(),
                y_max: b.rect.y_max(),
                class_id: b.class_id,
            })
            .map_err(std::io::Error::other)?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Altitude metadata
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct AltitudeRow {
    frame_id: String,
    altitude_m: f32,
}

/// Attach per-frame altitudes from a `frame_id,altitude_m` CSV.
///
/// Every frame must be listed; duplicate rows are accepted only when they
/// agree; altitudes must be positive.
pub fn attach_altitude(mut frames: Vec<Frame>, meta_path: &Path) -> Result<Vec<Frame>, DataError> {
    let rows: Vec<AltitudeRow> = collect_rows(meta_path, |row: AltitudeRow| {
        if row.altitude_m > 0.0 && row.altitude_m.is_finite() {
            Ok(row)
        } else {
            Err(format!(
                "non-positive altitude {} for frame {:?}",
                row.altitude_m, row.frame_id
            ))
        }
    })?;
    let mut table: HashMap<String, f32> = HashMap::new();
    for row in rows {
        match table.get(&row.frame_id) {
            Some(&existing) if existing != row.altitude_m => {
                return Err(DataError::ConflictingAltitude {
                    frame_id: row.frame_id,
                    a: existing,
                    b: row.altitude_m,
                });
            }
            _ => {
                table.insert(row.frame_id, row.altitude_m);
            }
        }
    }
    let missing: Vec<String> = frames
        .iter()
        .filter(|f| !table.contains_key(&f.frame_id))
        .map(|f| f.frame_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingAltitude { frame_ids: missing });
    }
    for frame in &mut frames {
        frame.altitude_m = Some(table[&frame.frame_id]);
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Frame-level split with floor-allocated sizes, remainder going to train.
/// Deterministic for a fixed seed.
pub fn split_dataset(
    frames: &[Frame],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let (tr, va, te) = ratios;
    if frames.is_empty() {
        return Err(DataError::EmptyFrameList);
    }
    if tr < 0.0 || va < 0.0 || te < 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(tr, va, te));
    }
    let mut ids: Vec<String> = frames.iter().map(|f| f.frame_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let n_val = (n as f64 * va).floor() as usize;
    let n_test = (n as f64 * te).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut iter = ids.into_iter();
    Ok(DatasetSplit {
        train: iter.by_ref().take(n_train).collect(),
        val: iter.by_ref().take(n_val).collect(),
        test: iter.collect(),
    })
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFrame {
    frame_id: String,
    image_path: String,
    altitude_m: Option<f32>,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    frames: Vec<ManifestFrame>,
}

/// Load a dataset manifest. Relative image paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<Frame>, DataError> {
    let text = fs::read_to_string(path)?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| DataError::Manifest {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashMap::new();
    let mut frames = Vec::with_capacity(doc.frames.len());
    for mf in doc.frames {
        if seen.insert(mf.frame_id.clone(), ()).is_some() {
            return Err(DataError::DuplicateFrameId(mf.frame_id));
        }
        if let Some(alt) = mf.altitude_m {
            if !(alt > 0.0 && alt.is_finite()) {
                return Err(DataError::Manifest {
                    path: path.display().to_string(),
                    reason: format!("frame {:?}: altitude {} must be positive", mf.frame_id, alt),
                });
            }
        }
        let raw = PathBuf::from(&mf.image_path);
        let image_path = if raw.is_absolute() { raw } else { base.join(raw) };
        frames.push(Frame {
            frame_id: mf.frame_id,
            image_path,
            altitude_m: mf.altitude_m,
            width: mf.width,
            height: mf.height,
            camera: None,
        });
    }
    Ok(frames)
}

pub fn save_manifest(path: &Path, frames: &[Frame]) -> Result<(), DataError> {
    let doc = ManifestDoc {
        frames: frames
            .iter()
            .map(|f| ManifestFrame {
                frame_id: f.frame_id.clone(),
                image_path: f.image_path.display().to_string(),
                altitude_m: f.altitude_m,
                width: f.width,
                height: f.height,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    fs::write(path, json)?;
    Ok(())
}
