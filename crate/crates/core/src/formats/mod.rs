//! Annotation and detection file formats: JTA skeleton dumps, COCO JSON
//! (ground truth and results) and MOT CSV (ground truth and detections).
//!
//! Emitters are deterministic: identical inputs give byte-identical output,
//! with numbers written in their shortest round-trip decimal form.

mod coco;
mod jta;
mod mot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

pub use coco::{
    emit_coco, emit_coco_results, parse_coco_gt, parse_coco_results, CocoAnnotation, CocoCategory,
    CocoDataset, CocoImage, CocoResult, ImageIndex, PEDESTRIAN_CATEGORY_ID,
};
pub use jta::{parse_jta, JTA_RECORD_ARITY};
pub use mot::{emit_mot, emit_mot_det, mot_ground_truth, parse_mot_det, parse_mot_gt, MotGtRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("incomplete skeleton for frame {frame}, pedestrian {pedestrian}: {found} joints, expected {expected}")]
    IncompleteSkeleton {
        frame: u64,
        pedestrian: u64,
        found: usize,
        expected: usize,
    },
    #[error("video `{0}` is not listed in the dataset manifest")]
    UnknownVideo(String),
    #[error("frame {frame} of video `{video}` is outside the manifest's frame range")]
    UnknownFrame { video: String, frame: u64 },
    #[error("MOT files hold one video, found `{0}` and `{1}`")]
    MixedVideos(String, String),
    #[error("{location}: score {score} outside [0, 1]")]
    InvalidScore { location: String, score: f64 },
    #[error("{location}: box must have positive width and height, got {bbox:?}")]
    InvalidBox { location: String, bbox: [f64; 4] },
}

impl FormatError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// A scored detection proposal in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub frame_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionFormat {
    CocoResults,
    MotDet,
}

impl std::str::FromStr for DetectionFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coco_results" | "coco-results" | "coco" => Ok(Self::CocoResults),
            "mot_det" | "mot-det" | "mot" => Ok(Self::MotDet),
            other => Err(format!(
                "unknown detection format `{other}` (expected coco_results or mot_det)"
            )),
        }
    }
}

/// Parses detections in either format. COCO results resolve `image_id`
/// through `images`; MOT detections belong to `video_id`.
pub fn parse_detections<R: std::io::Read>(
    source: R,
    format: DetectionFormat,
    video_id: &str,
    images: &ImageIndex,
) -> Result<Vec<Detection>, FormatError> {
    match format {
        DetectionFormat::CocoResults => parse_coco_results(source, images),
        DetectionFormat::MotDet => parse_mot_det(source, video_id),
    }
}

/// Orders detections by video, frame, then descending score; equal scores
/// keep their input order.
pub fn sort_detections(detections: &mut [Detection]) {
    detections.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.frame_id.cmp(&b.frame_id))
            .then(b.score.total_cmp(&a.score))
    });
}

const SCORE_SLACK: f64 = 1e-9;

pub(crate) fn checked_score(
    score: f64,
    location: impl FnOnce() -> String,
) -> Result<f64, FormatError> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else if (-SCORE_SLACK..0.0).contains(&score) {
        Ok(0.0)
    } else if score > 1.0 && score <= 1.0 + SCORE_SLACK {
        Ok(1.0)
    } else {
        Err(FormatError::InvalidScore {
            location: location(),
            score,
        })
    }
}

pub(crate) fn checked_box(
    b: [f64; 4],
    location: impl FnOnce() -> String,
) -> Result<BBox, FormatError> {
    let bbox = BBox::from(b);
    if bbox.is_proper() {
        Ok(bbox)
    } else {
        Err(FormatError::InvalidBox {
            location: location(),
            bbox: b,
        })
    }
}

/// Integral non-negative value stored as a number, e.g. `7` or `7.0`.
pub(crate) fn as_index(v: f64) -> Option<u64> {
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0)
        .then_some(v as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub frame_count: u64,
}

/// Provenance record for an emitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub videos: Vec<VideoEntry>,
    pub alpha_used: Option<f64>,
    pub distance_limit_m: Option<f64>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(format!(
                "image size must be positive, got {}x{}",
                self.image_w, self.image_h
            ));
        }
        if let Some(v) = self.videos.iter().find(|v| v.frame_count == 0) {
            return Err(format!("video `{}` has zero frames", v.video_id));
        }
        Ok(())
    }

    pub fn frame_count(&self, video_id: &str) -> Option<u64> {
        self.videos
            .iter()
            .find(|v| v.video_id == video_id)
            .map(|v| v.frame_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_clamping() {
        let loc = || "here".to_string();
        assert_eq!(checked_score(0.5, loc), Ok(0.5));
        assert_eq!(checked_score(-5e-10, loc), Ok(0.0));
        assert_eq!(checked_score(1.0 + 5e-10, loc), Ok(1.0));
        assert!(checked_score(1.01, loc).is_err());
        assert!(checked_score(-0.01, loc).is_err());
        assert!(checked_score(f64::NAN, loc).is_err());
    }

    #[test]
    fn detection_order() {
        let d = |v: &str, f, s| Detection {
            video_id: v.into(),
            frame_id: f,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            score: s,
        };
        let mut dets = vec![
            d("b", 1, 0.9),
            d("a", 2, 0.1),
            d("a", 2, 0.7),
            d("a", 1, 0.2),
            d("a", 2, 0.7),
        ];
        dets[2].bbox.x = 1.0;
        sort_detections(&mut dets);
        let keys: Vec<_> = dets
            .iter()
            .map(|d| (d.video_id.as_str(), d.frame_id, d.score, d.bbox.x))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("a", 1, 0.2, 0.0),
                ("a", 2, 0.7, 1.0),
                ("a", 2, 0.7, 0.0),
                ("a", 2, 0.1, 0.0),
                ("b", 1, 0.9, 0.0)
            ]
        );
    }

    #[test]
    fn format_names() {
        assert_eq!(
            "coco_results".parse::<DetectionFormat>(),
            Ok(DetectionFormat::CocoResults)
        );
        assert_eq!(
            "mot_det".parse::<DetectionFormat>(),
            Ok(DetectionFormat::MotDet)
        );
        assert!("xml".parse::<DetectionFormat>().is_err());
    }
}
