//! Evaluation: detection-to-ground-truth matching under IoU or Chebyshev
//! center-distance criteria, precision-recall curves, average precision,
//! and the threshold-sweep protocol.
//!
//! Both datasets this pipeline targets are single-class, so mAP equals the
//! one class's AP throughout; reports state that identity explicitly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;
use crate::tiling::Detection;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("sweep thresholds must be sorted ascending")]
    UnsortedThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchCriterion {
    Iou,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub criterion: MatchCriterion,
    /// A detection matches a ground-truth box when IoU >= this.
    pub iou_threshold: f64,
    /// Chebyshev acceptance is inclusive: center distance <= this.
    pub chebyshev_threshold: f64,
    pub conf_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            criterion: MatchCriterion::Iou,
            iou_threshold: 0.3,
            chebyshev_threshold: 200.0,
            conf_threshold: 0.1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(MetricsError::InvalidConfig(format!(
                "iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(self.chebyshev_threshold > 0.0 && self.chebyshev_threshold.is_finite()) {
            return Err(MetricsError::InvalidConfig(format!(
                "chebyshev_threshold {} must be positive",
                self.chebyshev_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(MetricsError::InvalidConfig(format!(
                "conf_threshold {} outside [0, 1]",
                self.conf_threshold
            )));
        }
        Ok(())
    }
}

/// Intersection-over-union of two boxes (half-open convention).
///
/// Degenerate boxes cannot be constructed, so this is total.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    a.iou(b)
}

/// Chebyshev distance between box centers: `max(|x1-x2|, |y1-y2|)`.
/// Box scale plays no part.
pub fn chebyshev(a: &PixelBox, b: &PixelBox) -> f64 {
    a.center_chebyshev(b)
}

/// One-to-one matching result for a single frame. Indices refer to the
/// input slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// (detection index, ground-truth index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }
}

/// Greedy one-to-one matching.
///
/// Detections are visited in descending confidence (stable on ties); each
/// claims the best-scoring unmatched ground truth that passes the
/// criterion threshold (highest IoU, or smallest Chebyshev distance), with
/// score ties broken by ground-truth index. Unmatched detections are false
/// positives, unmatched ground truths false negatives.
///
/// Callers pass detections already filtered at the confidence threshold.
pub fn match_detections(dets: &[Detection], gts: &[PixelBox], cfg: &EvalConfig) -> Matching {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence()
            .partial_cmp(&dets[a].confidence())
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut false_positives = Vec::new();
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            match cfg.criterion {
                MatchCriterion::Iou => {
                    let score = iou(&dets[d].rect, gt);
                    if score >= cfg.iou_threshold
                        && best.is_none_or(|(_, s)| score > s)
                    {
                        best = Some((g, score));
                    }
                }
                MatchCriterion::Chebyshev => {
                    let dist = chebyshev(&dets[d].rect, gt);
                    if dist <= cfg.chebyshev_threshold
                        && best.is_none_or(|(_, s)| dist < s)
                    {
                        best = Some((g, dist));
                    }
                }
            }
        }
        match best {
            Some((g, _)) => {
                gt_taken[g] = true;
                pairs.push((d, g));
            }
            None => false_positives.push(d),
        }
    }
    let false_negatives = (0..gts.len()).filter(|&g| !gt_taken[g]).collect();
    Matching {
        pairs,
        false_positives,
        false_negatives,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// A pooled detection outcome, ranked globally by confidence.
#[derive(Debug, Clone, Copy)]
pub struct RankedOutcome {
    pub confidence: f64,
    pub is_tp: bool,
}

/// Cumulative TP/FP walk over the globally ranked detections: one curve
/// point per detection. Recall denominators use the total GT count.
pub fn pr_curve(ranked: &[RankedOutcome], total_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    ranked
        .iter()
        .map(|o| {
            if o.is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                recall: tp as f64 / total_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect()
}

/// Area under the precision envelope (all-point interpolation): the
/// precision at each recall is the maximum precision at any recall at
/// least as large, integrated over recall.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    for i in (0..curve.len()).rev() {
        envelope = envelope.max(curve[i].precision);
        let prev_recall = if i == 0 { 0.0 } else { curve[i - 1].recall };
        ap += (curve[i].recall - prev_recall) * envelope;
    }
    ap
}

/// All evaluation inputs for one frame.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub frame_id: String,
    pub dets: Vec<Detection>,
    pub gts: Vec<PixelBox>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameCounts {
    pub frame_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
}

/// Evaluation result under one criterion across all frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionEval {
    pub criterion: MatchCriterion,
    /// The acceptance threshold actually used (IoU or pixels).
    pub threshold: f64,
    pub conf_threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    pub total_gt: usize,
    pub ap: f64,
    pub pr_curve: Vec<PrPoint>,
    pub per_frame: Vec<FrameCounts>,
}

/// Evaluate every frame under one criterion, pooling the PR curve over the
/// global confidence ranking.
///
/// With no ground truth at all, AP degenerates to 1.0 when there are also
/// no detections and 0.0 otherwise; the curve is left empty.
pub fn evaluate_frames(
    frames: &[FrameEval],
    cfg: &EvalConfig,
) -> Result<CriterionEval, MetricsError> {
    cfg.validate()?;
    let mut pooled: Vec<(f64, bool, usize, usize)> = Vec::new();
    let mut per_frame = Vec::with_capacity(frames.len());
    let mut total_gt = 0usize;
    let (mut tp, mut fp, mut false_negatives) = (0usize, 0usize, 0usize);
    for (fi, frame) in frames.iter().enumerate() {
        let kept: Vec<Detection> = frame
            .dets
            .iter()
            .filter(|d| d.confidence() >= cfg.conf_threshold)
            .copied()
            .collect();
        let matching = match_detections(&kept, &frame.gts, cfg);
        total_gt += frame.gts.len();
        tp += matching.tp();
        fp += matching.false_positives.len();
        false_negatives += matching.false_negatives.len();
        per_frame.push(FrameCounts {
            frame_id: frame.frame_id.clone(),
            tp: matching.tp(),
            fp: matching.false_positives.len(),
            false_negatives: matching.false_negatives.len(),
        });
        let mut tp_flags = vec![false; kept.len()];
        for &(d, _) in &matching.pairs {
            tp_flags[d] = true;
        }
        for (di, det) in kept.iter().enumerate() {
            pooled.push((det.confidence(), tp_flags[di], fi, di));
        }
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let ranked: Vec<RankedOutcome> = pooled
        .iter()
        .map(|&(confidence, is_tp, _, _)| RankedOutcome { confidence, is_tp })
        .collect();
    let (curve, ap) = if total_gt == 0 {
        (Vec::new(), if ranked.is_empty() { 1.0 } else { 0.0 })
    } else {
        let curve = pr_curve(&ranked, total_gt);
        let ap = average_precision(&curve);
        (curve, ap)
    };
    Ok(CriterionEval {
        criterion: cfg.criterion,
        threshold: match cfg.criterion {
            MatchCriterion::Iou => cfg.iou_threshold,
            MatchCriterion::Chebyshev => cfg.chebyshev_threshold,
        },
        conf_threshold: cfg.conf_threshold,
        tp,
        fp,
        false_negatives,
        total_gt,
        ap,
        pr_curve: curve,
        per_frame,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub map: f64,
}

/// Re-evaluate identical detections at each IoU threshold. Thresholds must
/// be sorted ascending. Single class, so mAP per point equals AP.
pub fn map_sweep(
    frames: &[FrameEval],
    thresholds: &[f64],
    base: &EvalConfig,
) -> Result<Vec<SweepPoint>, MetricsError> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(MetricsError::UnsortedThresholds);
    }
    thresholds
        .iter()
        .map(|&t| {
            let cfg = EvalConfig {
                criterion: MatchCriterion::Iou,
                iou_threshold: t,
                ..*base
            };
            evaluate_frames(frames, &cfg).map(|e| SweepPoint {
                threshold: t,
                map: e.ap,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> PixelBox {
        PixelBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(rect: PixelBox, conf: f64) -> Detection {
        Detection::new(rect, conf, 0).unwrap()
    }

    fn iou_cfg(threshold: f64) -> EvalConfig {
        EvalConfig {
            criterion: MatchCriterion::Iou,
            iou_threshold: threshold,
            ..EvalConfig::default()
        }
    }

    fn che_cfg(threshold: f64) -> EvalConfig {
        EvalConfig {
            criterion: MatchCriterion::Chebyshev,
            chebyshev_threshold: threshold,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn chebyshev_formula_anchor() {
        let a = bx(99.0, 99.0, 101.0, 101.0); // center (100, 100)
        let b = bx(140.0, 120.0, 160.0, 140.0); // center (150, 130)
        assert_eq!(chebyshev(&a, &b), 50.0);
    }

    #[test]
    fn chebyshev_exactly_at_threshold_is_accepted() {
        // centers (0,0)-ish and 200 px apart: inclusive acceptance
        let gt = bx(-5.0, -5.0, 5.0, 5.0);
        let d = det(bx(195.0, -5.0, 205.0, 5.0), 0.9);
        let m = match_detections(&[d], &[gt], &che_cfg(200.0));
        assert_eq!(m.tp(), 1);
    }

    #[test]
    fn exact_hit_is_tp() {
        let gt = bx(10.0, 10.0, 30.0, 30.0);
        let m = match_detections(&[det(gt, 0.9)], &[gt], &iou_cfg(0.3));
        assert_eq!((m.tp(), m.false_positives.len(), m.false_negatives.len()), (1, 0, 0));
    }

    #[test]
    fn double_detection_yields_one_tp_one_fp() {
        let gt = bx(10.0, 10.0, 30.0, 30.0);
        let d1 = det(bx(11.0, 10.0, 31.0, 30.0), 0.9);
        let d2 = det(bx(9.0, 10.0, 29.0, 30.0), 0.6);
        let m = match_detections(&[d2, d1], &[gt], &iou_cfg(0.3));
        assert_eq!((m.tp(), m.false_positives.len(), m.false_negatives.len()), (1, 1, 0));
        // the higher-confidence detection claims the GT
        assert_eq!(m.pairs[0].0, 1);
        assert_eq!(m.false_positives, vec![0]);
    }

    #[test]
    fn matching_is_one_to_one() {
        let gts = [bx(0.0, 0.0, 10.0, 10.0), bx(100.0, 0.0, 110.0, 10.0)];
        let dets = [
            det(bx(0.0, 0.0, 10.0, 10.0), 0.9),
            det(bx(1.0, 0.0, 11.0, 10.0), 0.8),
            det(bx(100.0, 0.0, 110.0, 10.0), 0.7),
        ];
        let m = match_detections(&dets, &gts, &iou_cfg(0.3));
        assert_eq!(m.tp(), 2);
        let mut gt_seen: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
        gt_seen.sort();
        gt_seen.dedup();
        assert_eq!(gt_seen.len(), m.tp());
    }

    #[test]
    fn scale_change_does_not_affect_chebyshev_matching() {
        let gts = [bx(90.0, 90.0, 110.0, 110.0)];
        let d_small = det(bx(95.0, 95.0, 105.0, 105.0), 0.8);
        let d_big = det(bx(50.0, 50.0, 150.0, 150.0), 0.8);
        let cfg = che_cfg(200.0);
        let a = match_detections(&[d_small], &gts, &cfg);
        let b = match_detections(&[d_big], &gts, &cfg);
        assert_eq!(a.tp(), b.tp());
    }

    #[test]
    fn pr_curve_walk_matches_hand_trace() {
        // [TP, FP, TP] on 2 GT
        let ranked = [
            RankedOutcome { confidence: 0.9, is_tp: true },
            RankedOutcome { confidence: 0.8, is_tp: false },
            RankedOutcome { confidence: 0.7, is_tp: true },
        ];
        let curve = pr_curve(&ranked, 2);
        assert_eq!(
            curve,
            vec![
                PrPoint { recall: 0.5, precision: 1.0 },
                PrPoint { recall: 0.5, precision: 0.5 },
                PrPoint { recall: 1.0, precision: 2.0 / 3.0 },
            ]
        );
        // envelope area: 1.0 * 0.5 + (2/3) * 0.5 = 5/6
        let ap = average_precision(&curve);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_trivial_cases() {
        assert_eq!(average_precision(&[]), 0.0);
        let perfect = [PrPoint { recall: 1.0, precision: 1.0 }];
        assert_eq!(average_precision(&perfect), 1.0);
    }

    #[test]
    fn all_tp_curve_has_unit_precision() {
        let ranked: Vec<RankedOutcome> = (0..3)
            .map(|i| RankedOutcome { confidence: 0.9 - 0.1 * i as f64, is_tp: true })
            .collect();
        let curve = pr_curve(&ranked, 4);
        assert!(curve.iter().all(|p| p.precision == 1.0));
        assert_eq!(curve.last().unwrap().recall, 0.75);
    }

    #[test]
    fn evaluate_accounting_identities() {
        let frames = vec![
            FrameEval {
                frame_id: "a".into(),
                dets: vec![
                    det(bx(0.0, 0.0, 10.0, 10.0), 0.9),
                    det(bx(50.0, 50.0, 60.0, 60.0), 0.8),
                ],
                gts: vec![bx(0.0, 0.0, 10.0, 10.0), bx(200.0, 200.0, 210.0, 210.0)],
            },
            FrameEval {
                frame_id: "b".into(),
                dets: vec![det(bx(5.0, 5.0, 15.0, 15.0), 0.05)], // below conf threshold
                gts: vec![bx(5.0, 5.0, 15.0, 15.0)],
            },
        ];
        let eval = evaluate_frames(&frames, &iou_cfg(0.3)).unwrap();
        assert_eq!(eval.tp + eval.false_negatives, eval.total_gt);
        assert_eq!(eval.tp, 1);
        assert_eq!(eval.fp, 1);
        assert_eq!(eval.total_gt, 3);
        assert_eq!(eval.per_frame.len(), 2);
    }

    #[test]
    fn no_detections_means_zero_ap_with_gt_present() {
        let frames = vec![FrameEval {
            frame_id: "a".into(),
            dets: vec![],
            gts: vec![bx(0.0, 0.0, 10.0, 10.0)],
        }];
        let eval = evaluate_frames(&frames, &iou_cfg(0.3)).unwrap();
        assert!(eval.pr_curve.is_empty());
        assert_eq!(eval.ap, 0.0);
    }

    #[test]
    fn empty_gt_conventions() {
        let clean = vec![FrameEval {
            frame_id: "a".into(),
            dets: vec![],
            gts: vec![],
        }];
        assert_eq!(evaluate_frames(&clean, &iou_cfg(0.3)).unwrap().ap, 1.0);
        let noisy = vec![FrameEval {
            frame_id: "a".into(),
            dets: vec![det(bx(0.0, 0.0, 5.0, 5.0), 0.9)],
            gts: vec![],
        }];
        assert_eq!(evaluate_frames(&noisy, &iou_cfg(0.3)).unwrap().ap, 0.0);
    }

    #[test]
    fn sweep_is_nonincreasing_and_validates_order() {
        let frames = vec![FrameEval {
            frame_id: "a".into(),
            dets: vec![
                det(bx(0.0, 0.0, 10.0, 10.0), 0.9),
                det(bx(21.0, 20.0, 33.0, 30.0), 0.8),
                det(bx(45.0, 40.0, 52.0, 50.0), 0.7),
            ],
            gts: vec![
                bx(0.0, 0.0, 10.0, 10.0),
                bx(20.0, 20.0, 30.0, 30.0),
                bx(40.0, 40.0, 50.0, 50.0),
            ],
        }];
        let thresholds = [0.1, 0.3, 0.5, 0.7, 0.9];
        let sweep = map_sweep(&frames, &thresholds, &EvalConfig::default()).unwrap();
        for pair in sweep.windows(2) {
            assert!(pair[1].map <= pair[0].map + 1e-12);
        }
        // pixel-perfect first box keeps the series nonzero at 0.9
        assert!(sweep[0].map > sweep.last().unwrap().map);
        assert!(matches!(
            map_sweep(&frames, &[0.5, 0.3], &EvalConfig::default()),
            Err(MetricsError::UnsortedThresholds)
        ));
    }

    #[test]
    fn sweep_at_one_without_pixel_perfect_boxes_is_zero() {
        let frames = vec![FrameEval {
            frame_id: "a".into(),
            dets: vec![det(bx(1.0, 0.0, 11.0, 10.0), 0.9)],
            gts: vec![bx(0.0, 0.0, 10.0, 10.0)],
        }];
        let sweep = map_sweep(&frames, &[1.0], &EvalConfig::default()).unwrap();
        assert_eq!(sweep[0].map, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EvalConfig::default();
        cfg.iou_threshold = 0.0;
        assert!(cfg.validate().is_err());
        cfg = EvalConfig::default();
        cfg.chebyshev_threshold = -1.0;
        assert!(cfg.validate().is_err());
        cfg = EvalConfig::default();
        cfg.conf_threshold = 1.5;
        assert!(cfg.validate().is_err());
    }
}
