//! Average-precision scoring of detections against ground truth at a single
//! IoU threshold.
//!
//! Protocol: proposals must score strictly above the confidence floor
//! (default 0.05) and a match needs IoU >= the threshold (default 0.5).
//! Matching is greedy in descending score, each detection taking the
//! unmatched ground-truth box it overlaps most.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::formats::Detection;
use crate::geometry::BBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SCORE_FLOOR: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "detection references frame {frame} of video `{video}`, which has no ground-truth entry"
    )]
    JoinError { video: String, frame: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_id: u64,
}

impl FrameKey {
    pub fn new(video_id: impl Into<String>, frame_id: u64) -> Self {
        Self {
            video_id: video_id.into(),
            frame_id,
        }
    }
}

/// Ground-truth boxes per frame. A frame may be present with no boxes, which
/// makes detections on it false positives rather than join errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    frames: BTreeMap<FrameKey, Vec<BBox>>,
}

impl GroundTruth {
    pub fn add_frame(&mut self, key: FrameKey) {
        self.frames.entry(key).or_default();
    }

    pub fn add_box(&mut self, key: FrameKey, b: BBox) {
        self.frames.entry(key).or_default().push(b);
    }

    pub fn boxes(&self, key: &FrameKey) -> Option<&[BBox]> {
        self.frames.get(key).map(Vec::as_slice)
    }

    pub fn n_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FrameKey, &[BBox])> {
        self.frames.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64, EvalError> {
    for bx in [a, b] {
        if !bx.is_proper() {
            return Err(EvalError::InvalidArgument(format!(
                "box must have positive area, got {bx:?}"
            )));
        }
    }
    Ok(overlap(a, b))
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    /// Index into the frame's detection list.
    pub detection: usize,
    pub matched_gt: Option<usize>,
    pub iou_at_match: Option<f64>,
}

impl MatchOutcome {
    pub fn is_true_positive(&self) -> bool {
        self.matched_gt.is_some()
    }
}

/// Greedy matching within one frame. Outcomes are returned in detection
/// input order.
pub fn match_frame(detections: &[Detection], gts: &[BBox], iou_thr: f64) -> Vec<MatchOutcome> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| detections[j].score.total_cmp(&detections[i].score));

    let mut taken = vec![false; gts.len()];
    let mut outcomes: Vec<MatchOutcome> = (0..detections.len())
        .map(|detection| MatchOutcome {
            detection,
            matched_gt: None,
            iou_at_match: None,
        })
        .collect();
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = overlap(&detections[i].bbox, gt);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            taken[g] = true;
            outcomes[i].matched_gt = Some(g);
            outcomes[i].iou_at_match = Some(v);
        }
    }
    outcomes
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub score: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score_threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at each distinct score threshold, highest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
}

/// Builds the PR curve over detections scoring strictly above `score_floor`.
pub fn pr_curve(outcomes: &[ScoredOutcome], n_gt: usize, score_floor: f64) -> PrCurve {
    if n_gt == 0 {
        return PrCurve {
            points: Vec::new(),
            n_gt,
        };
    }
    let mut kept: Vec<&ScoredOutcome> = outcomes.iter().filter(|o| o.score > score_floor).collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, o) in kept.iter().enumerate() {
        if o.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_threshold = kept.get(i + 1).is_none_or(|next| next.score != o.score);
        if last_of_threshold {
            points.push(PrPoint {
                score_threshold: o.score,
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / n_gt as f64,
            });
        }
    }
    PrCurve { points, n_gt }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApScheme {
    /// Exact area under the precision envelope.
    AllPoint,
    /// Mean envelope precision at recall 0.00, 0.01, ..., 1.00.
    Point101,
}

/// Precision envelope: each point's precision replaced by the best precision
/// at that recall or beyond.
fn envelope(pr: &PrCurve) -> Vec<f64> {
    let mut env: Vec<f64> = pr.points.iter().map(|p| p.precision).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

pub fn average_precision(pr: &PrCurve, scheme: ApScheme) -> f64 {
    if pr.points.is_empty() {
        return 0.0;
    }
    let env = envelope(pr);
    let ap = match scheme {
        ApScheme::AllPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (p, e) in pr.points.iter().zip(&env) {
                area += (p.recall - prev_recall) * e;
                prev_recall = p.recall;
            }
            area
        }
        ApScheme::Point101 => {
            let mut sum = 0.0;
            for t in 0..=100 {
                let r = t as f64 / 100.0;
                let i = pr.points.partition_point(|p| p.recall < r);
                if i < env.len() {
                    sum += env[i];
                }
            }
            sum / 101.0
        }
    };
    ap.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub iou_thr: f64,
    pub score_floor: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thr: DEFAULT_IOU_THRESHOLD,
            score_floor: DEFAULT_SCORE_FLOOR,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_thr > 0.0 && self.iou_thr <= 1.0) {
            return Err(EvalError::InvalidArgument(format!(
                "IoU threshold must be in (0, 1], got {}",
                self.iou_thr
            )));
        }
        if !(self.score_floor >= 0.0 && self.score_floor < 1.0) {
            return Err(EvalError::InvalidArgument(format!(
                "score floor must be in [0, 1), got {}",
                self.score_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ap_allpoint: f64,
    pub ap_101point: f64,
    pub n_gt: usize,
    /// Detections scoring above the floor.
    pub n_det: usize,
    #[serde(serialize_with = "serialize_pr")]
    pub pr: PrCurve,
}

fn serialize_pr<S: Serializer>(pr: &PrCurve, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(
        pr.points
            .iter()
            .map(|p| [p.score_threshold, p.precision, p.recall]),
    )
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Matches every frame, pools the outcomes and integrates AP under both
/// schemes. `n_gt` counts every ground-truth box, detected or not.
pub fn evaluate(
    detections: &[Detection],
    gt: &GroundTruth,
    params: EvalParams,
) -> Result<EvalReport, EvalError> {
    params.validate()?;
    let mut by_frame: BTreeMap<FrameKey, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        let key = FrameKey::new(d.video_id.clone(), d.frame_id);
        if gt.boxes(&key).is_none() {
            return Err(EvalError::JoinError {
                video: d.video_id.clone(),
                frame: d.frame_id,
            });
        }
        by_frame.entry(key).or_default().push(d.clone());
    }

    let frames: Vec<(FrameKey, Vec<Detection>)> = by_frame.into_iter().collect();
    let per_frame: Vec<Vec<ScoredOutcome>> = frames
        .par_iter()
        .map(|(key, dets)| {
            let gts = gt.boxes(key).unwrap_or(&[]);
            match_frame(dets, gts, params.iou_thr)
                .into_iter()
                .map(|o| ScoredOutcome {
                    score: dets[o.detection].score,
                    true_positive: o.is_true_positive(),
                })
                .collect()
        })
        .collect();
    let pooled: Vec<ScoredOutcome> = per_frame.into_iter().flatten().collect();

    let n_gt = gt.n_boxes();
    let pr = pr_curve(&pooled, n_gt, params.score_floor);
    Ok(EvalReport {
        ap_allpoint: average_precision(&pr, ApScheme::AllPoint),
        ap_101point: average_precision(&pr, ApScheme::Point101),
        n_gt,
        n_det: pooled
            .iter()
            .filter(|o| o.score > params.score_floor)
            .count(),
        pr,
    })
}
