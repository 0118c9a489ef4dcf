use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use super::{as_index, checked_box, checked_score, sort_detections, Detection, FormatError};
use crate::evaluation::{FrameKey, GroundTruth};
use crate::geometry::{AnnotatedBox, BBox};

/// One row of a MOT ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotGtRecord {
    pub frame_id: u64,
    pub track_id: u64,
    pub bbox: BBox,
    pub conf: f64,
    pub class: i64,
    pub visibility: f64,
}

/// Writes `frame,id,bb_left,bb_top,bb_width,bb_height,1,1,1` rows sorted by
/// frame and id. All annotations must come from one video.
pub fn emit_mot(annotations: &[AnnotatedBox]) -> Result<String, FormatError> {
    if let Some(first) = annotations.first() {
        if let Some(other) = annotations.iter().find(|a| a.video_id != first.video_id) {
            return Err(FormatError::MixedVideos(
                first.video_id.clone(),
                other.video_id.clone(),
            ));
        }
    }
    let mut rows: Vec<&AnnotatedBox> = annotations.iter().collect();
    rows.sort_by(|a, b| {
        a.frame_id
            .cmp(&b.frame_id)
            .then(a.pedestrian_id.cmp(&b.pedestrian_id))
    });
    let mut out = String::new();
    for a in rows {
        let b = a.bbox;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},1,1,1",
            a.frame_id, a.pedestrian_id, b.x, b.y, b.w, b.h
        );
    }
    Ok(out)
}

/// Writes MOT detection rows `frame,-1,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1`.
pub fn emit_mot_det(detections: &[Detection]) -> Result<String, FormatError> {
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.video_id != first.video_id) {
            return Err(FormatError::MixedVideos(
                first.video_id.clone(),
                other.video_id.clone(),
            ));
        }
    }
    let mut sorted = detections.to_vec();
    sort_detections(&mut sorted);
    let mut out = String::new();
    for d in sorted {
        let b = d.bbox;
        let _ = writeln!(
            out,
            "{},-1,{},{},{},{},{},-1,-1,-1",
            d.frame_id, b.x, b.y, b.w, b.h, d.score
        );
    }
    Ok(out)
}

/// Non-empty lines split on commas, each tagged with its 1-based line number.
fn csv_rows<R: Read>(source: R) -> impl Iterator<Item = Result<(usize, Vec<String>), FormatError>> {
    BufReader::new(source)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some(Err(FormatError::parse(
                    format!("line {line_no}"),
                    e.to_string(),
                ))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some(Ok((
                    line_no,
                    l.split(',').map(|f| f.trim().to_string()).collect(),
                ))),
            }
        })
}

fn numbers(line: usize, fields: &[String], min: usize) -> Result<Vec<f64>, FormatError> {
    if fields.len() < min {
        return Err(FormatError::parse(
            format!("line {line}"),
            format!("expected at least {min} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    FormatError::parse(
                        format!("line {line}"),
                        format!("field {} `{f}` is not a number", i + 1),
                    )
                })
        })
        .collect()
}

/// Parses MOT ground truth. Rows need at least the six geometry columns;
/// missing conf/class/visibility default to 1.
pub fn parse_mot_gt<R: Read>(source: R) -> Result<Vec<MotGtRecord>, FormatError> {
    csv_rows(source)
        .map(|row| {
            let (line, fields) = row?;
            let v = numbers(line, &fields, 6)?;
            let loc = || format!("line {line}");
            let frame_id = as_index(v[0])
                .ok_or_else(|| FormatError::parse(loc(), "frame must be a non-negative integer"))?;
            let track_id = as_index(v[1])
                .ok_or_else(|| FormatError::parse(loc(), "id must be a non-negative integer"))?;
            let class = v.get(7).copied().unwrap_or(1.0);
            if class.fract() != 0.0 {
                return Err(FormatError::parse(
                    loc(),
                    format!("class must be an integer, got {class}"),
                ));
            }
            Ok(MotGtRecord {
                frame_id,
                track_id,
                bbox: checked_box([v[2], v[3], v[4], v[5]], loc)?,
                conf: v.get(6).copied().unwrap_or(1.0),
                class: class as i64,
                visibility: v.get(8).copied().unwrap_or(1.0),
            })
        })
        .collect()
}

/// Evaluation ground truth for one MOT video: pedestrian-class rows only,
/// with every frame from 1 to the last annotated frame indexed.
pub fn mot_ground_truth(records: &[MotGtRecord], video_id: &str) -> GroundTruth {
    let mut gt = GroundTruth::default();
    let last = records.iter().map(|r| r.frame_id).max().unwrap_or(0);
    for frame in 1..=last {
        gt.add_frame(FrameKey::new(video_id, frame));
    }
    for r in records.iter().filter(|r| r.class == 1) {
        gt.add_box(FrameKey::new(video_id, r.frame_id), r.bbox);
    }
    gt
}

/// Parses MOT detections `frame,id,bb_left,bb_top,bb_width,bb_height,conf[,x,y,z]`.
/// The id and world-coordinate columns are ignored; conf is the score.
pub fn parse_mot_det<R: Read>(source: R, video_id: &str) -> Result<Vec<Detection>, FormatError> {
    let mut out = csv_rows(source)
        .map(|row| {
            let (line, fields) = row?;
            let v = numbers(line, &fields, 7)?;
            let loc = || format!("line {line}");
            let frame_id = as_index(v[0])
                .ok_or_else(|| FormatError::parse(loc(), "frame must be a non-negative integer"))?;
            Ok(Detection {
                video_id: video_id.to_string(),
                frame_id,
                bbox: checked_box([v[2], v[3], v[4], v[5]], loc)?,
                score: checked_score(v[6], loc)?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    sort_detections(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(video: &str, frame_id: u64, pedestrian_id: u64, bbox: BBox) -> AnnotatedBox {
        AnnotatedBox {
            video_id: video.into(),
            frame_id,
            pedestrian_id,
            bbox,
            distance_m: 10.0,
            skeleton_box: bbox,
        }
    }

    #[test]
    fn gt_row_layout() {
        let out = emit_mot(&[ann("v", 3, 5, BBox::new(10.0, 20.0, 30.0, 40.0))]).unwrap();
        assert_eq!(out, "3,5,10,20,30,40,1,1,1\n");
        assert_eq!(emit_mot(&[]).unwrap(), "");
    }

    #[test]
    fn gt_rows_sorted_and_single_video() {
        let b = BBox::new(1.25, 2.0, 3.0, 4.0);
        let out = emit_mot(&[ann("v", 2, 1, b), ann("v", 1, 9, b), ann("v", 1, 3, b)]).unwrap();
        let keys: Vec<_> = out
            .lines()
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(keys, vec!["1,3", "1,9", "2,1"]);
        assert_eq!(
            emit_mot(&[ann("a", 1, 1, b), ann("b", 1, 1, b)]),
            Err(FormatError::MixedVideos("a".into(), "b".into()))
        );
    }

    #[test]
    fn gt_round_trip() {
        let anns = vec![
            ann("v", 1, 2, BBox::new(0.1, 0.2, 1.0 / 3.0, 4e-7)),
            ann("v", 4, 1, BBox::new(-3.5, 2.0, 30.0, 40.0)),
        ];
        let text = emit_mot(&anns).unwrap();
        let parsed = parse_mot_gt(text.as_bytes()).unwrap();
        for (a, r) in anns.iter().zip(&parsed) {
            assert_eq!(
                (a.frame_id, a.pedestrian_id, a.bbox),
                (r.frame_id, r.track_id, r.bbox)
            );
            assert_eq!((r.conf, r.class, r.visibility), (1.0, 1, 1.0));
        }
    }

    #[test]
    fn gt_index_keeps_pedestrians_only() {
        let text = "1,1,10,20,30,40,1,1,1\n3,2,10,20,30,40,0,7,0.5\n";
        let gt = mot_ground_truth(&parse_mot_gt(text.as_bytes()).unwrap(), "v");
        assert_eq!(gt.n_boxes(), 1);
        assert_eq!(gt.n_frames(), 3);
    }

    #[test]
    fn det_row_mapping() {
        let dets = parse_mot_det("1,-1,10,20,30,40,0.9,-1,-1,-1\n".as_bytes(), "v").unwrap();
        assert_eq!(
            dets,
            vec![Detection {
                video_id: "v".into(),
                frame_id: 1,
                bbox: BBox::new(10.0, 20.0, 30.0, 40.0),
                score: 0.9
            }]
        );
        assert!(parse_mot_det("".as_bytes(), "v").unwrap().is_empty());
    }

    #[test]
    fn det_round_trip_and_errors() {
        let text = "2,-1,1,2,3,4,0.5,-1,-1,-1\n1,-1,1,2,3,4,0.25,-1,-1,-1\n";
        let dets = parse_mot_det(text.as_bytes(), "v").unwrap();
        let again = emit_mot_det(&dets).unwrap();
        assert_eq!(parse_mot_det(again.as_bytes(), "v").unwrap(), dets);
        assert!(matches!(
            parse_mot_det("1,-1,1,2,3,4,5.0,-1,-1,-1\n".as_bytes(), "v"),
            Err(FormatError::InvalidScore { ref location, .. }) if location == "line 1"
        ));
        assert!(matches!(
            parse_mot_det("1,-1,1,2,3,4,0.5\n\n1,-1,1,2,x,4,0.5\n".as_bytes(), "v"),
            Err(FormatError::Parse { ref location, .. }) if location == "line 3"
        ));
        assert!(parse_mot_det("1,-1,1,2,3,4\n".as_bytes(), "v").is_err());
    }
}
