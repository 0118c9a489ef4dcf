use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{checked_box, checked_score, sort_detections, DatasetManifest, Detection, FormatError};
use crate::evaluation::{FrameKey, GroundTruth};
use crate::geometry::{sort_annotations, AnnotatedBox, BBox};

pub const PEDESTRIAN_CATEGORY_ID: u64 = 1;

/// COCO detection dataset. `info` carries the [`DatasetManifest`] for files
/// written by [`emit_coco`]; images and annotations carry optional identity
/// fields so synthesized annotations survive a round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<Value>,
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pedestrian_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton_bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

/// One record of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
}

fn image_file_name(key: &FrameKey) -> String {
    format!("{}/{:06}.jpg", key.video_id, key.frame_id)
}

/// Bidirectional map between COCO image ids and (video, frame).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageIndex {
    by_id: BTreeMap<u64, FrameKey>,
    by_frame: BTreeMap<FrameKey, u64>,
}

impl ImageIndex {
    pub fn from_images(images: &[CocoImage]) -> Result<Self, FormatError> {
        let mut index = Self::default();
        for (i, img) in images.iter().enumerate() {
            let key = image_key(img);
            if index.by_id.insert(img.id, key.clone()).is_some() {
                return Err(FormatError::parse(
                    format!("images[{i}]"),
                    format!("duplicate image id {}", img.id),
                ));
            }
            if index.by_frame.insert(key.clone(), img.id).is_some() {
                return Err(FormatError::parse(
                    format!("images[{i}]"),
                    format!("duplicate image for {}/{}", key.video_id, key.frame_id),
                ));
            }
        }
        Ok(index)
    }

    pub fn frame(&self, image_id: u64) -> Option<&FrameKey> {
        self.by_id.get(&image_id)
    }

    pub fn image_id(&self, key: &FrameKey) -> Option<u64> {
        self.by_frame.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameKey> {
        self.by_frame.keys()
    }
}

/// Explicit identity fields win; otherwise `<video>/<frame>.<ext>` file names
/// are decoded; otherwise the image id stands in for the frame.
fn image_key(img: &CocoImage) -> FrameKey {
    if let (Some(video_id), Some(frame_id)) = (&img.video_id, img.frame_id) {
        return FrameKey::new(video_id.clone(), frame_id);
    }
    if let Some((video, file)) = img.file_name.rsplit_once('/') {
        let stem = file.split('.').next().unwrap_or("");
        if let Ok(frame_id) = stem.parse::<u64>() {
            return FrameKey::new(video, frame_id);
        }
    }
    FrameKey::new("", img.id)
}

/// Writes annotations as a COCO dataset. Every frame of every manifest video
/// gets an image entry; image and annotation ids count up from 1 in
/// (video, frame) and canonical annotation order.
pub fn emit_coco(
    annotations: &[AnnotatedBox],
    manifest: &DatasetManifest,
) -> Result<CocoDataset, FormatError> {
    manifest
        .validate()
        .map_err(|m| FormatError::parse("manifest", m))?;
    let mut videos: Vec<_> = manifest.videos.iter().collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let mut images = Vec::new();
    let mut first_image_id = HashMap::new();
    for v in videos {
        if first_image_id
            .insert(v.video_id.as_str(), images.len() as u64 + 1)
            .is_some()
        {
            return Err(FormatError::parse(
                "manifest",
                format!("video `{}` listed twice", v.video_id),
            ));
        }
        for frame_id in 1..=v.frame_count {
            let key = FrameKey::new(v.video_id.clone(), frame_id);
            images.push(CocoImage {
                id: images.len() as u64 + 1,
                width: manifest.image_w,
                height: manifest.image_h,
                file_name: image_file_name(&key),
                video_id: Some(key.video_id),
                frame_id: Some(frame_id),
            });
        }
    }

    let mut sorted = annotations.to_vec();
    sort_annotations(&mut sorted);
    let mut coco_annotations = Vec::with_capacity(sorted.len());
    for (i, a) in sorted.iter().enumerate() {
        let first = *first_image_id
            .get(a.video_id.as_str())
            .ok_or_else(|| FormatError::UnknownVideo(a.video_id.clone()))?;
        let frame_count = manifest.frame_count(&a.video_id).unwrap_or(0);
        if a.frame_id == 0 || a.frame_id > frame_count {
            return Err(FormatError::UnknownFrame {
                video: a.video_id.clone(),
                frame: a.frame_id,
            });
        }
        coco_annotations.push(CocoAnnotation {
            id: i as u64 + 1,
            image_id: first + a.frame_id - 1,
            category_id: PEDESTRIAN_CATEGORY_ID,
            bbox: a.bbox.as_array(),
            area: a.bbox.area(),
            iscrowd: 0,
            pedestrian_id: Some(a.pedestrian_id),
            distance_m: Some(a.distance_m),
            skeleton_bbox: Some(a.skeleton_box.as_array()),
            score: None,
        });
    }

    Ok(CocoDataset {
        info: Some(serde_json::to_value(manifest).expect("manifest serializes")),
        images,
        annotations: coco_annotations,
        categories: vec![CocoCategory {
            id: PEDESTRIAN_CATEGORY_ID,
            name: "pedestrian".into(),
        }],
    })
}

pub fn parse_coco_gt<R: Read>(source: R) -> Result<CocoDataset, FormatError> {
    serde_json::from_reader(source).map_err(|e| {
        FormatError::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

impl CocoDataset {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("COCO dataset serializes");
        s.push('\n');
        s
    }

    /// The manifest stored in `info`, if this file was written by [`emit_coco`].
    pub fn manifest(&self) -> Option<DatasetManifest> {
        self.info
            .clone()
            .and_then(|v| serde_json::from_value(v).ok())
    }

    pub fn image_index(&self) -> Result<ImageIndex, FormatError> {
        ImageIndex::from_images(&self.images)
    }

    /// Recovers synthesized annotations; fails on annotations lacking the
    /// identity and distance fields that [`emit_coco`] writes.
    pub fn annotated_boxes(&self) -> Result<Vec<AnnotatedBox>, FormatError> {
        let index = self.image_index()?;
        self.annotations
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let loc = || format!("annotations[{i}] (id {})", a.id);
                let missing = |field: &str| FormatError::parse(loc(), format!("missing `{field}`"));
                let key = index.frame(a.image_id).ok_or_else(|| {
                    FormatError::parse(loc(), format!("unknown image_id {}", a.image_id))
                })?;
                Ok(AnnotatedBox {
                    video_id: key.video_id.clone(),
                    frame_id: key.frame_id,
                    pedestrian_id: a.pedestrian_id.ok_or_else(|| missing("pedestrian_id"))?,
                    bbox: checked_box(a.bbox, loc)?,
                    distance_m: a.distance_m.ok_or_else(|| missing("distance_m"))?,
                    skeleton_box: BBox::from(
                        a.skeleton_bbox.ok_or_else(|| missing("skeleton_bbox"))?,
                    ),
                })
            })
            .collect()
    }

    /// Evaluation ground truth: every image becomes a frame, every pedestrian
    /// annotation a box.
    pub fn ground_truth(&self) -> Result<GroundTruth, FormatError> {
        let index = self.image_index()?;
        let mut gt = GroundTruth::default();
        for key in index.frames() {
            gt.add_frame(key.clone());
        }
        for (i, a) in self.annotations.iter().enumerate() {
            if a.category_id != PEDESTRIAN_CATEGORY_ID {
                continue;
            }
            let loc = || format!("annotations[{i}] (id {})", a.id);
            let key = index.frame(a.image_id).ok_or_else(|| {
                FormatError::parse(loc(), format!("unknown image_id {}", a.image_id))
            })?;
            gt.add_box(key.clone(), checked_box(a.bbox, loc)?);
        }
        Ok(gt)
    }

    /// Treats each pedestrian annotation as a detection, scored by its
    /// `score` field or 1.0.
    pub fn as_detections(&self) -> Result<Vec<Detection>, FormatError> {
        let index = self.image_index()?;
        let mut out = Vec::with_capacity(self.annotations.len());
        for (i, a) in self.annotations.iter().enumerate() {
            if a.category_id != PEDESTRIAN_CATEGORY_ID {
                continue;
            }
            let loc = || format!("annotations[{i}] (id {})", a.id);
            let key = index.frame(a.image_id).ok_or_else(|| {
                FormatError::parse(loc(), format!("unknown image_id {}", a.image_id))
            })?;
            out.push(Detection {
                video_id: key.video_id.clone(),
                frame_id: key.frame_id,
                bbox: checked_box(a.bbox, loc)?,
                score: checked_score(a.score.unwrap_or(1.0), loc)?,
            });
        }
        sort_detections(&mut out);
        Ok(out)
    }
}

/// Parses a COCO results array, resolving image ids through `images`.
pub fn parse_coco_results<R: Read>(
    source: R,
    images: &ImageIndex,
) -> Result<Vec<Detection>, FormatError> {
    let records: Vec<CocoResult> = serde_json::from_reader(source).map_err(|e| {
        FormatError::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let loc = || format!("result {i}");
        let key = images
            .frame(r.image_id)
            .ok_or_else(|| FormatError::parse(loc(), format!("unknown image_id {}", r.image_id)))?;
        out.push(Detection {
            video_id: key.video_id.clone(),
            frame_id: key.frame_id,
            bbox: checked_box(r.bbox, loc)?,
            score: checked_score(r.score, loc)?,
        });
    }
    sort_detections(&mut out);
    Ok(out)
}

/// Writes detections as a COCO results array in detection order.
pub fn emit_coco_results(
    detections: &[Detection],
    images: &ImageIndex,
) -> Result<String, FormatError> {
    let mut sorted = detections.to_vec();
    sort_detections(&mut sorted);
    let records = sorted
        .iter()
        .map(|d| {
            let key = FrameKey::new(d.video_id.clone(), d.frame_id);
            let image_id = images
                .image_id(&key)
                .ok_or_else(|| FormatError::UnknownFrame {
                    video: d.video_id.clone(),
                    frame: d.frame_id,
                })?;
            Ok(CocoResult {
                image_id,
                category_id: PEDESTRIAN_CATEGORY_ID,
                bbox: d.bbox.as_array(),
                score: d.score,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let mut s = serde_json::to_string(&records).expect("results serialize");
    s.push('\n');
    Ok(s)
}
