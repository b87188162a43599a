//! Deterministic frame-to-patch tiling, detection coordinate remapping,
//! and cross-tile duplicate suppression.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PixelBox};
use crate::imaging::{ImageBuffer, ImagingError, ScaleFactor};

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("tile size {tile_size} exceeds frame {frame_w}x{frame_h}")]
    TileLargerThanFrame {
        tile_size: u32,
        frame_w: u32,
        frame_h: u32,
    },
    #[error("overlap {overlap} must be smaller than tile size {tile_size}")]
    InvalidOverlap { overlap: u32, tile_size: u32 },
    #[error("tile origin ({x},{y}) out of bounds for frame {frame_w}x{frame_h}")]
    OriginOutOfBounds {
        x: u32,
        y: u32,
        frame_w: u32,
        frame_h: u32,
    },
    #[error("nms iou threshold {0} outside [0, 1]")]
    InvalidNmsThreshold(f64),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("detections csv {path}, row {row}: {reason}")]
    Csv {
        path: String,
        row: usize,
        reason: String,
    },
    #[error("csv error: {0}")]
    CsvFile(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A detected box in pixel coordinates with a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: PixelBox,
    confidence: f64,
    pub class_id: u32,
}

impl Detection {
    pub fn new(rect: PixelBox, confidence: f64, class_id: u32) -> Result<Self, TilingError> {
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(TilingError::InvalidConfidence(confidence));
        }
        Ok(Self {
            rect,
            confidence,
            class_id,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Deterministic mapping between frame coordinates and fixed-size patches.
///
/// Tiles are row-major; interior tiles step by `tile_size - overlap`, and
/// the last tile in each row/column is anchored to the frame border so
/// every tile lies fully inside the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    frame_w: u32,
    frame_h: u32,
    tile_size: u32,
    overlap: u32,
    tiles: Vec<(u32, u32)>,
}

impl TileGrid {
    pub fn frame_w(&self) -> u32 {
        self.frame_w
    }

    pub fn frame_h(&self) -> u32 {
        self.frame_h
    }

    pub fn tile_size(&self) -> u32 {
        self.tile_size
    }

    pub fn overlap(&self) -> u32 {
        self.overlap
    }

    pub fn tiles(&self) -> &[(u32, u32)] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

fn axis_origins(frame: u32, tile: u32, stride: u32) -> Vec<u32> {
    let mut origins = Vec::new();
    let mut pos = 0u32;
    loop {
        origins.push(pos);
        if pos + tile >= frame {
            break;
        }
        pos = (pos + stride).min(frame - tile);
    }
    origins
}

/// Plan a full-coverage tile grid over a frame.
pub fn plan_tiles(
    frame_w: u32,
    frame_h: u32,
    tile_size: u32,
    overlap: u32,
) -> Result<TileGrid, TilingError> {
    if tile_size == 0 || tile_size > frame_w.min(frame_h) {
        return Err(TilingError::TileLargerThanFrame {
            tile_size,
            frame_w,
            frame_h,
        });
    }
    if overlap >= tile_size {
        return Err(TilingError::InvalidOverlap { overlap, tile_size });
    }
    let stride = tile_size - overlap;
    let xs = axis_origins(frame_w, tile_size, stride);
    let ys = axis_origins(frame_h, tile_size, stride);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            tiles.push((x, y));
        }
    }
    Ok(TileGrid {
        frame_w,
        frame_h,
        tile_size,
        overlap,
        tiles,
    })
}

/// Extract one `tile_size x tile_size` patch as a pixel-exact copy.
pub fn extract_tile(
    frame: &ImageBuffer,
    origin: (u32, u32),
    tile_size: u32,
) -> Result<ImageBuffer, TilingError> {
    let (x, y) = origin;
    if x.checked_add(tile_size).is_none_or(|xe| xe > frame.width())
        || y.checked_add(tile_size).is_none_or(|ye| ye > frame.height())
    {
        return Err(TilingError::OriginOutOfBounds {
            x,
            y,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    Ok(frame.crop(x, y, tile_size, tile_size)?)
}

/// Map patch-local detections back to frame coordinates.
///
/// `sr_factor` is the net upscale applied to the patch before detection;
/// coordinates are divided by it, then offset by the tile origin.
/// Confidences and classes pass through unchanged.
pub fn remap_detections(
    dets: &[Detection],
    origin: (u32, u32),
    sr_factor: ScaleFactor,
) -> Vec<Detection> {
    let inv = 1.0 / sr_factor.get();
    dets.iter()
        .map(|d| Detection {
            rect: d.rect.scale(inv).translate(origin.0 as f64, origin.1 as f64),
            confidence: d.confidence,
            class_id: d.class_id,
        })
        .collect()
}

/// Greedy non-maximum suppression across a whole frame.
///
/// Detections are visited in descending confidence (ties broken by
/// `(x_min, y_min)`); a detection is suppressed when its IoU with an
/// already-kept detection exceeds `nms_iou`.
pub fn merge_frame_detections(
    mut dets: Vec<Detection>,
    nms_iou: f64,
) -> Result<Vec<Detection>, TilingError> {
    if !(0.0..=1.0).contains(&nms_iou) || nms_iou.is_nan() {
        return Err(TilingError::InvalidNmsThreshold(nms_iou));
    }
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.rect.x_min().partial_cmp(&b.rect.x_min()).unwrap())
            .then(a.rect.y_min().partial_cmp(&b.rect.y_min()).unwrap())
    });
    let mut kept: Vec<Detection> = Vec::new();
    for det in dets {
        if kept.iter().all(|k| k.rect.iou(&det.rect) <= nms_iou) {
            kept.push(det);
        }
    }
    Ok(kept)
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    frame_id: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    confidence: f64,
    class_id: u32,
}

/// Write the detection interchange CSV: one row per detection.
pub fn write_detections_csv(
    path: &Path,
    dets: &[(String, Detection)],
) -> Result<(), TilingError> {
    let mut writer = csv::Writer::from_path(path)?;
    for (frame_id, det) in dets {
        writer
            .serialize(DetectionRow {
                frame_id: frame_id.clone(),
                x_min: det.rect.x_min(),
                y_min: det.rect.y_min(),
                x_max: det.rect.x_max(),
                y_max: det.rect.y_max(),
                confidence: det.confidence,
                class_id: det.class_id,
            })
            .map_err(std::io::Error::other)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read the detection interchange CSV. Malformed rows fail with their
/// 1-based row number.
pub fn read_detections_csv(path: &Path) -> Result<Vec<(String, Detection)>, TilingError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in reader.deserialize::<DetectionRow>().enumerate() {
        let row_no = i + 2; // header is row 1
        let fail = |reason: String| TilingError::Csv {
            path: path.display().to_string(),
            row: row_no,
            reason,
        };
        let row = record.map_err(|e| fail(e.to_string()))?;
        let rect = PixelBox::new(row.x_min, row.y_min, row.x_max, row.y_max)
            .map_err(|e| fail(e.to_string()))?;
        let det =
            Detection::new(rect, row.confidence, row.class_id).map_err(|e| fail(e.to_string()))?;
        out.push((row.frame_id, det));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, conf: f64) -> Detection {
        Detection::new(PixelBox::new(x0, y0, x1, y1).unwrap(), conf, 0).unwrap()
    }

    #[test]
    fn survey_frame_tile_count() {
        // 3000x4000 frame, 512 tiles, no overlap: 6 columns x 8 rows.
        let grid = plan_tiles(3000, 4000, 512, 0).unwrap();
        assert_eq!(grid.len(), 48);
        let xs: std::collections::BTreeSet<u32> = grid.tiles().iter().map(|t| t.0).collect();
        let ys: std::collections::BTreeSet<u32> = grid.tiles().iter().map(|t| t.1).collect();
        assert_eq!(xs.len(), 6);
        assert_eq!(ys.len(), 8);
    }

    #[test]
    fn exact_fit_is_single_tile() {
        let grid = plan_tiles(512, 512, 512, 0).unwrap();
        assert_eq!(grid.tiles(), &[(0, 0)]);
    }

    #[test]
    fn edge_tile_is_anchored() {
        let grid = plan_tiles(520, 512, 512, 0).unwrap();
        assert_eq!(grid.tiles(), &[(0, 0), (8, 0)]);
    }

    #[test]
    fn tile_larger_than_frame_is_error() {
        assert!(plan_tiles(500, 4000, 512, 0).is_err());
        assert!(plan_tiles(512, 512, 512, 512).is_err());
    }

    #[test]
    fn coverage_and_row_major_order() {
        for &(w, h, tile, overlap) in &[(100u32, 70u32, 32u32, 0u32), (97, 97, 32, 8), (64, 64, 64, 0)] {
            let grid = plan_tiles(w, h, tile, overlap).unwrap();
            // every pixel covered
            let mut covered = vec![false; (w * h) as usize];
            for &(x, y) in grid.tiles() {
                for yy in y..y + tile {
                    for xx in x..x + tile {
                        covered[(yy * w + xx) as usize] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c), "{w}x{h} tile {tile} overlap {overlap}");
            // row-major, deterministic
            let mut sorted = grid.tiles().to_vec();
            sorted.sort_by_key(|&(x, y)| (y, x));
            assert_eq!(grid.tiles(), &sorted[..]);
        }
    }

    #[test]
    fn extract_whole_frame_tile() {
        let data: Vec<u8> = (0..16).collect();
        let frame = ImageBuffer::new(4, 4, 1, data).unwrap();
        let tile = extract_tile(&frame, (0, 0), 4).unwrap();
        assert_eq!(tile, frame);
    }

    #[test]
    fn anchored_edge_tile_holds_frame_border() {
        // gradient frame: last row/col of the frame must land in the last
        // row/col of the anchored tile
        let mut frame = ImageBuffer::filled(20, 16, 1, 0).unwrap();
        for y in 0..16 {
            for x in 0..20 {
                frame.set_sample(x, y, 0, (x + y) as u8);
            }
        }
        let grid = plan_tiles(20, 16, 16, 0).unwrap();
        let &(x, y) = grid.tiles().last().unwrap();
        let tile = extract_tile(&frame, (x, y), 16).unwrap();
        assert_eq!(tile.sample(15, 15, 0), frame.sample(19, 15, 0));
        assert_eq!(
            extract_tile(&frame, (5, 1), 16).unwrap_err().to_string(),
            TilingError::OriginOutOfBounds { x: 5, y: 1, frame_w: 20, frame_h: 16 }.to_string()
        );
    }

    #[test]
    fn remap_identity_and_scaled() {
        let d = det(0.0, 0.0, 100.0, 100.0, 0.7);
        let same = remap_detections(&[d], (0, 0), ScaleFactor::new(1.0).unwrap());
        assert_eq!(same[0], d);

        let moved = remap_detections(&[d], (512, 0), ScaleFactor::new(2.0).unwrap());
        let r = moved[0].rect;
        assert_eq!(
            (r.x_min(), r.y_min(), r.x_max(), r.y_max()),
            (512.0, 0.0, 562.0, 50.0)
        );
        assert_eq!(moved[0].confidence(), 0.7);
    }

    #[test]
    fn nms_keeps_highest_confidence_duplicate() {
        let kept = merge_frame_detections(
            vec![det(0.0, 0.0, 10.0, 10.0, 0.8), det(0.0, 0.0, 10.0, 10.0, 0.9)],
            0.5,
        )
        .unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence(), 0.9);
    }

    #[test]
    fn nms_chain_keeps_ends() {
        // A overlaps B, B overlaps C, A and C disjoint; conf A > B > C.
        // Greedy: A kept, B suppressed by A, C kept (disjoint from A).
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(4.0, 0.0, 14.0, 10.0, 0.8); // IoU(a,b) = 6/14 = 0.43
        let c = det(8.0, 0.0, 18.0, 10.0, 0.7); // IoU(b,c) = 0.43, IoU(a,c) = 2/18
        assert!(a.rect.iou(&b.rect) > 0.4 && b.rect.iou(&c.rect) > 0.4);
        let kept = merge_frame_detections(vec![a, b, c], 0.4).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].confidence(), 0.9);
        assert_eq!(kept[1].confidence(), 0.7);
    }

    #[test]
    fn nms_single_detection_unchanged() {
        let d = det(1.0, 2.0, 3.0, 4.0, 0.5);
        assert_eq!(merge_frame_detections(vec![d], 0.5).unwrap(), vec![d]);
        assert!(merge_frame_detections(vec![d], 1.5).is_err());
    }

    #[test]
    fn detections_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.csv");
        let rows = vec![
            ("frame-a".to_string(), det(1.0, 2.0, 3.5, 4.5, 0.25)),
            ("frame-b".to_string(), det(10.0, 20.0, 30.0, 40.0, 1.0)),
        ];
        write_detections_csv(&path, &rows).unwrap();
        assert_eq!(read_detections_csv(&path).unwrap(), rows);
    }

    #[test]
    fn malformed_csv_row_is_reported_with_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "frame_id,x_min,y_min,x_max,y_max,confidence,class_id\na,0,0,10,10,0.5,0\nb,5,5,2,10,0.5,0\n",
        )
        .unwrap();
        match read_detections_csv(&path) {
            Err(TilingError::Csv { row: 3, .. }) => {}
            other => panic!("expected csv error on row 3, got {other:?}"),
        }
    }
}
