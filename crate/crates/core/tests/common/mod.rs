//! Independent reference implementations and fixture generators shared by
//! the integration tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use skel2box::{BBox, Detection, Joint, SkeletonInstance};

pub fn random_skeleton<R: Rng>(
    rng: &mut R,
    video: &str,
    frame_id: u64,
    pedestrian_id: u64,
) -> SkeletonInstance {
    let cx = rng.random_range(-200.0..2100.0);
    let cy = rng.random_range(-200.0..1300.0);
    let half_w = rng.random_range(1.0..80.0);
    let half_h = rng.random_range(1.0..250.0);
    let z = rng.random_range(2.0..80.0);
    let joints = (0..22)
        .map(|j| Joint {
            joint_id: j,
            x_px: cx + rng.random_range(-half_w..half_w),
            y_px: cy + rng.random_range(-half_h..half_h),
            x3d_m: rng.random_range(-5.0..5.0),
            y3d_m: rng.random_range(-2.0..2.0),
            z3d_m: z + rng.random_range(-0.3..0.3),
            occluded: rng.random_bool(0.2),
            self_occluded: rng.random_bool(0.2),
        })
        .collect();
    SkeletonInstance {
        video_id: video.into(),
        frame_id,
        pedestrian_id,
        joints,
    }
}

/// Exhaustive min/max over every joint coordinate.
pub fn reference_hull(s: &SkeletonInstance) -> (f64, f64, f64, f64) {
    let xs: Vec<f64> = s.joints.iter().map(|j| j.x_px).collect();
    let ys: Vec<f64> = s.joints.iter().map(|j| j.y_px).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min(&xs), min(&ys), max(&xs), max(&ys))
}

/// Per-axis mean, then Euclidean norm.
pub fn reference_distance(s: &SkeletonInstance) -> f64 {
    let n = s.joints.len() as f64;
    let mean = |f: fn(&Joint) -> f64| s.joints.iter().map(f).sum::<f64>() / n;
    let (x, y, z) = (mean(|j| j.x3d_m), mean(|j| j.y3d_m), mean(|j| j.z3d_m));
    (x * x + y * y + z * z).sqrt()
}

/// IoU from corner coordinates.
pub fn reference_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Greedy matcher by repeated linear scans: take the highest-scoring
/// unprocessed detection (earliest on ties), give it the unmatched ground
/// truth with the largest IoU (earliest on ties) if it reaches `thr`.
/// Returns one TP flag per detection, in input order.
pub fn reference_match(dets: &[(BBox, f64)], gts: &[BBox], thr: f64) -> Vec<bool> {
    let mut done = vec![false; dets.len()];
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for _ in 0..dets.len() {
        let mut pick = None;
        for (i, d) in dets.iter().enumerate() {
            if !done[i] && pick.is_none_or(|p: usize| d.1 > dets[p].1) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = reference_iou(&dets[i].0, gt);
            if !taken[g] && v >= thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[i] = true;
        }
    }
    tp
}

/// PR points (threshold, precision, recall) by counting, for each distinct
/// score, everything at or above it.
pub fn reference_pr(scored: &[(f64, bool)], n_gt: usize, floor: f64) -> Vec<(f64, f64, f64)> {
    if n_gt == 0 {
        return vec![];
    }
    let kept: Vec<(f64, bool)> = scored.iter().copied().filter(|s| s.0 > floor).collect();
    let mut thresholds: Vec<f64> = kept.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let tp = kept.iter().filter(|s| s.0 >= t && s.1).count();
            let fp = kept.iter().filter(|s| s.0 >= t && !s.1).count();
            (t, tp as f64 / (tp + fp) as f64, tp as f64 / n_gt as f64)
        })
        .collect()
}

/// All-point and 101-point AP with the envelope taken by brute-force max.
pub fn reference_ap(points: &[(f64, f64, f64)]) -> (f64, f64) {
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let env = |i: usize| points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
    let mut allpoint = 0.0;
    let mut prev = 0.0;
    for (i, p) in points.iter().enumerate() {
        allpoint += (p.2 - prev) * env(i);
        prev = p.2;
    }
    let mut sum = 0.0;
    for t in 0..=100 {
        let r = t as f64 / 100.0;
        sum += points
            .iter()
            .filter(|p| p.2 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
    }
    (allpoint.clamp(0.0, 1.0), (sum / 101.0).clamp(0.0, 1.0))
}

pub struct ReferenceReport {
    pub ap_allpoint: f64,
    pub ap_101point: f64,
    pub n_gt: usize,
    pub n_det: usize,
    pub pr: Vec<(f64, f64, f64)>,
}

pub fn reference_evaluate(
    dets: &[Detection],
    gts: &GtFrames,
    thr: f64,
    floor: f64,
) -> ReferenceReport {
    let mut frames: BTreeMap<(String, u64), Vec<(BBox, f64)>> = BTreeMap::new();
    for d in dets {
        frames
            .entry((d.video_id.clone(), d.frame_id))
            .or_default()
            .push((d.bbox, d.score));
    }
    let mut scored = Vec::new();
    for (key, fd) in &frames {
        let tp = reference_match(fd, &gts[key], thr);
        scored.extend(fd.iter().zip(tp).map(|(d, t)| (d.1, t)));
    }
    let n_gt = gts.values().map(Vec::len).sum();
    let pr = reference_pr(&scored, n_gt, floor);
    let (ap_allpoint, ap_101point) = reference_ap(&pr);
    ReferenceReport {
        ap_allpoint,
        ap_101point,
        n_gt,
        n_det: scored.iter().filter(|s| s.0 > floor).count(),
        pr,
    }
}

/// Small random evaluation instance on an integer grid, so IoU and score
/// ties occur.
pub type GtFrames = BTreeMap<(String, u64), Vec<BBox>>;

pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<Detection>, GtFrames) {
    let n_frames = rng.random_range(1..=20u64);
    let mut gts = BTreeMap::new();
    let mut dets = Vec::new();
    let grid_box = |rng: &mut R| {
        BBox::new(
            rng.random_range(0..8) as f64,
            rng.random_range(0..8) as f64,
            rng.random_range(1..6) as f64,
            rng.random_range(1..6) as f64,
        )
    };
    for frame in 1..=n_frames {
        let n_gt = rng.random_range(0..=4);
        let boxes: Vec<BBox> = (0..n_gt).map(|_| grid_box(rng)).collect();
        let n_det = rng.random_range(0..=4);
        for _ in 0..n_det {
            let bbox = if !boxes.is_empty() && rng.random_bool(0.6) {
                let g = boxes[rng.random_range(0..boxes.len())];
                BBox::new(
                    g.x + rng.random_range(-1..=1) as f64,
                    g.y + rng.random_range(-1..=1) as f64,
                    g.w,
                    g.h,
                )
            } else {
                grid_box(rng)
            };
            let score = [0.04, 0.05, 0.1, 0.3, 0.5, 0.5, 0.7, 0.9, 1.0][rng.random_range(0..9)];
            dets.push(Detection {
                video_id: "v".into(),
                frame_id: frame,
                bbox,
                score,
            });
        }
        gts.insert(("v".to_string(), frame), boxes);
    }
    (dets, gts)
}
