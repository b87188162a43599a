//! Threshold-plus-connected-components blob detector.
//!
//! A deterministic, weight-free detector: pipeline and acceptance tests
//! run end to end against it without any trained model.

use super::DetectorError;
use crate::geometry::PixelBox;
use crate::imaging::ImageBuffer;
use crate::tiling::Detection;

/// Detect bright blobs: grayscale by channel mean, threshold, 8-connected
/// component labeling, then one detection per component with area at least
/// `min_area`. Confidence is the component's mean intensity.
pub fn blob_oracle_detect(
    patch: &ImageBuffer,
    threshold: f64,
    min_area: usize,
) -> Result<Vec<Detection>, DetectorError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DetectorError::InvalidConfig(format!(
            "blob threshold {threshold} outside (0, 1)"
        )));
    }
    let (w, h) = (patch.width() as usize, patch.height() as usize);
    let mut mask = vec![false; w * h];
    let mut intensity = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = patch.intensity(x as u32, y as u32);
            intensity[y * w + x] = v;
            mask[y * w + x] = v as f64 > threshold;
        }
    }

    let mut visited = vec![false; w * h];
    let mut dets = Vec::new();
    let mut queue: Vec<usize> = Vec::new();
    for start in 0..w * h {
        if !mask[start] || visited[start] {
            continue;
        }
        // flood fill one 8-connected component
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let (mut min_x, mut max_x) = (start % w, start % w);
        let (mut min_y, mut max_y) = (start / w, start / w);
        let mut area = 0usize;
        let mut sum = 0.0f64;
        while let Some(idx) = queue.pop() {
            let (x, y) = (idx % w, idx / w);
            area += 1;
            sum += intensity[idx] as f64;
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask[nidx] && !visited[nidx] {
                        visited[nidx] = true;
                        queue.push(nidx);
                    }
                }
            }
        }
        if area < min_area {
            continue;
        }
        let rect = PixelBox::new(
            min_x as f64,
            min_y as f64,
            (max_x + 1) as f64,
            (max_y + 1) as f64,
        )
        .expect("component box has positive extent");
        let confidence = (sum / area as f64).clamp(0.0, 1.0);
        dets.push(Detection::new(rect, confidence, 0).expect("confidence in range"));
    }
    Ok(dets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32) -> ImageBuffer {
        ImageBuffer::filled(w, h, 1, 40).unwrap()
    }

    fn paint_disk(img: &mut ImageBuffer, cx: i64, cy: i64, r: i64, value: u8) {
        for y in 0..img.height() as i64 {
            for x in 0..img.width() as i64 {
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                    img.set_sample(x as u32, y as u32, 0, value);
                }
            }
        }
    }

    #[test]
    fn one_bright_disk_yields_one_detection() {
        let mut img = gray(64, 64);
        paint_disk(&mut img, 30, 28, 6, 230);
        let dets = blob_oracle_detect(&img, 0.5, 4).unwrap();
        assert_eq!(dets.len(), 1);
        let r = dets[0].rect;
        assert!(r.x_min() <= 30.0 && 30.0 < r.x_max());
        assert!(r.y_min() <= 28.0 && 28.0 < r.y_max());
        assert!((dets[0].confidence() - 230.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn blank_patch_is_empty() {
        let dets = blob_oracle_detect(&gray(32, 32), 0.5, 1).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn two_separated_disks_are_two_detections() {
        // 16x16 fixture: two 2x2 squares separated by > 1 dark pixel
        let mut img = gray(16, 16);
        for &(x, y) in &[(2u32, 2u32), (3, 2), (2, 3), (3, 3)] {
            img.set_sample(x, y, 0, 250);
        }
        for &(x, y) in &[(9u32, 9u32), (10, 9), (9, 10), (10, 10)] {
            img.set_sample(x, y, 0, 250);
        }
        let dets = blob_oracle_detect(&img, 0.5, 1).unwrap();
        assert_eq!(dets.len(), 2);
    }

    #[test]
    fn diagonal_touch_is_one_component() {
        // 8-connectivity joins diagonal neighbors
        let mut img = gray(8, 8);
        img.set_sample(2, 2, 0, 250);
        img.set_sample(3, 3, 0, 250);
        let dets = blob_oracle_detect(&img, 0.5, 1).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].rect.width(), 2.0);
    }

    #[test]
    fn min_area_suppresses_speckle() {
        let mut img = gray(32, 32);
        img.set_sample(5, 5, 0, 250);
        paint_disk(&mut img, 20, 20, 4, 250);
        let dets = blob_oracle_detect(&img, 0.5, 3).unwrap();
        assert_eq!(dets.len(), 1);
        assert!(dets[0].rect.x_min() > 10.0);
    }

    #[test]
    fn translation_equivariance() {
        let mut base = gray(64, 64);
        paint_disk(&mut base, 20, 22, 5, 240);
        let base_dets = blob_oracle_detect(&base, 0.5, 4).unwrap();

        let (dx, dy) = (13i64, 7i64);
        let mut shifted = gray(64, 64);
        paint_disk(&mut shifted, 20 + dx, 22 + dy, 5, 240);
        let shifted_dets = blob_oracle_detect(&shifted, 0.5, 4).unwrap();

        assert_eq!(base_dets.len(), shifted_dets.len());
        for (a, b) in base_dets.iter().zip(&shifted_dets) {
            assert_eq!(a.rect.translate(dx as f64, dy as f64), b.rect);
            assert_eq!(a.confidence(), b.confidence());
        }
    }

    #[test]
    fn threshold_must_be_inside_unit_interval() {
        assert!(blob_oracle_detect(&gray(4, 4), 0.0, 1).is_err());
        assert!(blob_oracle_detect(&gray(4, 4), 1.0, 1).is_err());
    }
}
