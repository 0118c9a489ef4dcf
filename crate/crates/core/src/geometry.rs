//! Full-body bounding boxes synthesized from skeleton joints.
//!
//! The skeleton hull under-covers the body because joints sit inside the
//! mesh. The hull height is grown by `alpha / z` (z = camera distance of the
//! body's center of mass) and the width follows from the hull aspect ratio.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Joint count of the JTA skeleton layout.
pub const DEFAULT_JOINTS_PER_SKELETON: usize = 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate skeleton: joint hull has zero width or height")]
    DegenerateSkeleton,
    #[error("non-positive or non-finite camera distance {0}")]
    NonPositiveDistance(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub joint_id: u32,
    pub x_px: f64,
    pub y_px: f64,
    pub x3d_m: f64,
    pub y3d_m: f64,
    pub z3d_m: f64,
    pub occluded: bool,
    pub self_occluded: bool,
}

impl Joint {
    /// A visible joint at the given screen and camera-space position.
    pub fn new(joint_id: u32, screen: (f64, f64), camera: (f64, f64, f64)) -> Self {
        Self {
            joint_id,
            x_px: screen.0,
            y_px: screen.1,
            x3d_m: camera.0,
            y3d_m: camera.1,
            z3d_m: camera.2,
            occluded: false,
            self_occluded: false,
        }
    }
}

/// One pedestrian in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonInstance {
    pub video_id: String,
    pub frame_id: u64,
    pub pedestrian_id: u64,
    pub joints: Vec<Joint>,
}

/// Axis-aligned box in pixels, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True when both sides are strictly positive and all fields finite.
    pub fn is_proper(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Synthesized detection ground truth for one pedestrian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub video_id: String,
    pub frame_id: u64,
    pub pedestrian_id: u64,
    /// Padded (mesh) box, clamped to the image when clamping is enabled.
    pub bbox: BBox,
    pub distance_m: f64,
    pub skeleton_box: BBox,
}

impl AnnotatedBox {
    /// Canonical dataset order: video, frame, pedestrian.
    pub fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.video_id
            .cmp(&other.video_id)
            .then(self.frame_id.cmp(&other.frame_id))
            .then(self.pedestrian_id.cmp(&other.pedestrian_id))
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        let bits = |a: &AnnotatedBox| {
            [
                a.bbox.x,
                a.bbox.y,
                a.bbox.w,
                a.bbox.h,
                a.distance_m,
                a.skeleton_box.x,
                a.skeleton_box.y,
                a.skeleton_box.w,
                a.skeleton_box.h,
            ]
        };
        self.sort_key_cmp(other).then_with(|| {
            bits(self)
                .iter()
                .zip(bits(other).iter())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

/// Sorts into canonical order; exact duplicates of the identity triple are
/// ordered by geometry so the result never depends on input order.
pub fn sort_annotations(annotations: &mut [AnnotatedBox]) {
    annotations.sort_by(AnnotatedBox::total_cmp);
}

/// Min/max hull of every joint's screen position, occluded joints included.
pub fn skeleton_enclosing_box(skeleton: &SkeletonInstance) -> Result<BBox, GeometryError> {
    let mut joints = skeleton.joints.iter();
    let first = joints.next().ok_or(GeometryError::DegenerateSkeleton)?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x_px, first.y_px, first.x_px, first.y_px);
    for j in joints {
        x0 = x0.min(j.x_px);
        y0 = y0.min(j.y_px);
        x1 = x1.max(j.x_px);
        y1 = y1.max(j.y_px);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(GeometryError::DegenerateSkeleton);
    }
    Ok(BBox::new(x0, y0, w, h))
}

/// Euclidean norm of the unweighted mean of the joints' camera-space positions.
pub fn camera_distance(skeleton: &SkeletonInstance) -> Result<f64, GeometryError> {
    let n = skeleton.joints.len();
    if n == 0 {
        return Err(GeometryError::InvalidArgument(
            "skeleton has no joints".into(),
        ));
    }
    let (sx, sy, sz) = skeleton
        .joints
        .iter()
        .fold((0.0, 0.0, 0.0), |(x, y, z), j| {
            (x + j.x3d_m, y + j.y3d_m, z + j.z3d_m)
        });
    let n = n as f64;
    let (mx, my, mz) = (sx / n, sy / n, sz / n);
    let d = (mx * mx + my * my + mz * mz).sqrt();
    if !(d.is_finite() && d > 0.0) {
        return Err(GeometryError::NonPositiveDistance(d));
    }
    Ok(d)
}

/// Grows the skeleton box to mesh height `h + alpha / z`, keeping its aspect
/// ratio and its center.
pub fn pad_box(skeleton_box: BBox, z: f64, alpha: f64) -> Result<BBox, GeometryError> {
    if !(z.is_finite() && z > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "distance must be positive, got {z}"
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if !skeleton_box.is_proper() {
        return Err(GeometryError::InvalidArgument(format!(
            "skeleton box must have positive size, got {skeleton_box:?}"
        )));
    }
    let h_m = skeleton_box.h + alpha / z;
    if h_m == skeleton_box.h {
        return Ok(skeleton_box);
    }
    let aspect = skeleton_box.w / skeleton_box.h;
    let w_m = h_m * aspect;
    let (cx, cy) = skeleton_box.center();
    Ok(BBox::new(cx - w_m / 2.0, cy - h_m / 2.0, w_m, h_m))
}

/// Intersection with `[0, image_w] x [0, image_h]`, or `None` when empty.
pub fn clamp_to_image(b: BBox, image_w: f64, image_h: f64) -> Option<BBox> {
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(image_w);
    let y1 = b.bottom().min(image_h);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    if x0 == b.x && y0 == b.y && x1 == b.right() && y1 == b.bottom() {
        return Some(b);
    }
    Some(BBox::new(x0, y0, x1 - x0, y1 - y0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub alpha: f64,
    pub image_w: f64,
    pub image_h: f64,
    /// Clip boxes to the image frame; off-screen instances are then skipped.
    pub clamp: bool,
}

impl SynthesisOptions {
    pub fn new(alpha: f64, image_w: f64, image_h: f64) -> Self {
        Self {
            alpha,
            image_w,
            image_h,
            clamp: true,
        }
    }
}

/// Per-reason counts of skeletons that produced no annotation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub degenerate: usize,
    pub bad_distance: usize,
    pub off_screen: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.degenerate + self.bad_distance + self.off_screen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub annotations: Vec<AnnotatedBox>,
    pub skipped: SkipCounts,
}

enum Outcome {
    Kept(AnnotatedBox),
    Degenerate,
    BadDistance,
    OffScreen,
}

fn synthesize_one(s: &SkeletonInstance, opts: &SynthesisOptions) -> Result<Outcome, GeometryError> {
    let skeleton_box = match skeleton_enclosing_box(s) {
        Ok(b) => b,
        Err(GeometryError::DegenerateSkeleton) => return Ok(Outcome::Degenerate),
        Err(e) => return Err(e),
    };
    let distance_m = match camera_distance(s) {
        Ok(d) => d,
        Err(GeometryError::NonPositiveDistance(_)) => return Ok(Outcome::BadDistance),
        Err(e) => return Err(e),
    };
    let padded = pad_box(skeleton_box, distance_m, opts.alpha)?;
    let bbox = if opts.clamp {
        match clamp_to_image(padded, opts.image_w, opts.image_h) {
            Some(b) => b,
            None => return Ok(Outcome::OffScreen),
        }
    } else {
        padded
    };
    Ok(Outcome::Kept(AnnotatedBox {
        video_id: s.video_id.clone(),
        frame_id: s.frame_id,
        pedestrian_id: s.pedestrian_id,
        bbox,
        distance_m,
        skeleton_box,
    }))
}

/// Runs hull, distance, padding and clamping over every skeleton. Instances
/// that cannot produce a box are counted in [`SkipCounts`] instead of failing
/// the batch. Output is in canonical order regardless of input order.
pub fn synthesize_annotations(
    skeletons: &[SkeletonInstance],
    opts: &SynthesisOptions,
) -> Result<Synthesis, GeometryError> {
    if !(opts.alpha.is_finite() && opts.alpha >= 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "alpha must be >= 0, got {}",
            opts.alpha
        )));
    }
    if opts.clamp && !(opts.image_w > 0.0 && opts.image_h > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "image size must be positive, got {}x{}",
            opts.image_w, opts.image_h
        )));
    }

    let outcomes: Vec<Outcome> = skeletons
        .par_iter()
        .map(|s| synthesize_one(s, opts))
        .collect::<Result<_, _>>()?;

    let mut skipped = SkipCounts::default();
    let mut annotations = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Outcome::Kept(a) => annotations.push(a),
            Outcome::Degenerate => skipped.degenerate += 1,
            Outcome::BadDistance => skipped.bad_distance += 1,
            Outcome::OffScreen => skipped.off_screen += 1,
        }
    }
    sort_annotations(&mut annotations);
    Ok(Synthesis {
        annotations,
        skipped,
    })
}
