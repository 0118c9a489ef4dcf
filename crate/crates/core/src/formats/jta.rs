use std::collections::BTreeMap;
use std::io::Read;

use serde_json::Value;

use super::{as_index, FormatError};
use crate::geometry::{Joint, SkeletonInstance};

/// Fields per record: frame, pedestrian, joint, x2d, y2d, x3d, y3d, z3d,
/// occluded, self_occluded.
pub const JTA_RECORD_ARITY: usize = 10;

/// Parses a JTA joint dump (a JSON array of 10-number records) into one
/// skeleton per (frame, pedestrian), joints ordered by id, skeletons sorted
/// by frame then pedestrian.
pub fn parse_jta<R: Read>(
    source: R,
    video_id: &str,
    joints_per_skeleton: usize,
) -> Result<Vec<SkeletonInstance>, FormatError> {
    let records: Vec<Value> = serde_json::from_reader(source).map_err(|e| {
        FormatError::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;

    let mut groups: BTreeMap<(u64, u64), Vec<Option<Joint>>> = BTreeMap::new();
    for (index, record) in records.iter().enumerate() {
        let loc = || format!("record {index}");
        let fields = record
            .as_array()
            .ok_or_else(|| FormatError::parse(loc(), "record is not an array"))?;
        if fields.len() != JTA_RECORD_ARITY {
            return Err(FormatError::parse(
                loc(),
                format!("expected {JTA_RECORD_ARITY} fields, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; JTA_RECORD_ARITY];
        for (slot, (i, f)) in v.iter_mut().zip(fields.iter().enumerate()) {
            *slot = f.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                FormatError::parse(loc(), format!("field {i} is not a finite number"))
            })?;
        }
        let index_field = |i: usize, name: &str| {
            as_index(v[i]).ok_or_else(|| {
                FormatError::parse(
                    loc(),
                    format!("{name} must be a non-negative integer, got {}", v[i]),
                )
            })
        };
        let frame = index_field(0, "frame_id")?;
        if frame == 0 {
            return Err(FormatError::parse(loc(), "frame_id is 1-based, got 0"));
        }
        let pedestrian = index_field(1, "pedestrian_id")?;
        let joint_id = index_field(2, "joint_id")? as usize;
        if joint_id >= joints_per_skeleton {
            return Err(FormatError::parse(
                loc(),
                format!("joint_id {joint_id} outside [0, {joints_per_skeleton})"),
            ));
        }
        let flag = |i: usize, name: &str| match v[i] {
            0.0 => Ok(false),
            1.0 => Ok(true),
            x => Err(FormatError::parse(
                loc(),
                format!("{name} must be 0 or 1, got {x}"),
            )),
        };
        let joint = Joint {
            joint_id: joint_id as u32,
            x_px: v[3],
            y_px: v[4],
            x3d_m: v[5],
            y3d_m: v[6],
            z3d_m: v[7],
            occluded: flag(8, "occluded")?,
            self_occluded: flag(9, "self_occluded")?,
        };
        let slots = groups
            .entry((frame, pedestrian))
            .or_insert_with(|| vec![None; joints_per_skeleton]);
        if slots[joint_id].replace(joint).is_some() {
            return Err(FormatError::parse(
                loc(),
                format!("duplicate joint {joint_id} for frame {frame}, pedestrian {pedestrian}"),
            ));
        }
    }

    groups
        .into_iter()
        .map(|((frame_id, pedestrian_id), slots)| {
            let found = slots.iter().flatten().count();
            if found != joints_per_skeleton {
                return Err(FormatError::IncompleteSkeleton {
                    frame: frame_id,
                    pedestrian: pedestrian_id,
                    found,
                    expected: joints_per_skeleton,
                });
            }
            Ok(SkeletonInstance {
                video_id: video_id.to_string(),
                frame_id,
                pedestrian_id,
                joints: slots.into_iter().flatten().collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn records(frame: u64, ped: u64, joints: usize) -> Vec<Value> {
        (0..joints)
            .map(|j| {
                json!([
                    frame,
                    ped,
                    j,
                    100.0 + j as f64,
                    200.0 + 2.0 * j as f64,
                    0.1,
                    0.2,
                    10.0,
                    0,
                    0
                ])
            })
            .collect()
    }

    #[test]
    fn groups_one_skeleton() {
        let src = serde_json::to_string(&records(1, 7, 22)).unwrap();
        let out = parse_jta(src.as_bytes(), "seq_1", 22).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            (out[0].frame_id, out[0].pedestrian_id, out[0].joints.len()),
            (1, 7, 22)
        );
        assert!(out[0]
            .joints
            .iter()
            .enumerate()
            .all(|(i, j)| j.joint_id as usize == i));
        assert_eq!(out[0].video_id, "seq_1");
    }

    #[test]
    fn missing_joint_is_incomplete() {
        let src = serde_json::to_string(&records(1, 7, 21)).unwrap();
        assert_eq!(
            parse_jta(src.as_bytes(), "v", 22),
            Err(FormatError::IncompleteSkeleton {
                frame: 1,
                pedestrian: 7,
                found: 21,
                expected: 22
            })
        );
    }

    #[test]
    fn order_independent() {
        let mut recs = records(2, 3, 22);
        recs.extend(records(1, 9, 22));
        recs.extend(records(1, 2, 22));
        let sorted = parse_jta(serde_json::to_string(&recs).unwrap().as_bytes(), "v", 22).unwrap();
        recs.reverse();
        recs.swap(3, 40);
        let shuffled =
            parse_jta(serde_json::to_string(&recs).unwrap().as_bytes(), "v", 22).unwrap();
        assert_eq!(
            serde_json::to_string(&sorted).unwrap(),
            serde_json::to_string(&shuffled).unwrap()
        );
        let keys: Vec<_> = sorted
            .iter()
            .map(|s| (s.frame_id, s.pedestrian_id))
            .collect();
        assert_eq!(keys, vec![(1, 2), (1, 9), (2, 3)]);
    }

    #[test]
    fn malformed_records() {
        assert!(matches!(
            parse_jta("[[1,2,3]".as_bytes(), "v", 22),
            Err(FormatError::Parse { .. })
        ));
        let err = parse_jta(
            "[[1,7,0,1,2,3,4,5,0,0],[1,7,1,1,2,3,4,5,0]]".as_bytes(),
            "v",
            22,
        )
        .unwrap_err();
        assert_eq!(
            err,
            FormatError::parse("record 1", "expected 10 fields, found 9")
        );
        let err = parse_jta("[[1,7,22,1,2,3,4,5,0,0]]".as_bytes(), "v", 22).unwrap_err();
        assert!(matches!(err, FormatError::Parse { ref location, .. } if location == "record 0"));
        let err = parse_jta("[[1,7,0,1,2,3,4,5,0,2]]".as_bytes(), "v", 22).unwrap_err();
        assert!(matches!(err, FormatError::Parse { .. }));
        let err = parse_jta(
            "[[1,7,0,1,2,3,4,5,0,0],[1,7,0,1,2,3,4,5,0,0]]".as_bytes(),
            "v",
            22,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::Parse { ref location, .. } if location == "record 1"));
        assert_eq!(parse_jta("[]".as_bytes(), "v", 22), Ok(vec![]));
    }

    #[test]
    fn float_encoded_indices_and_flags() {
        let src = "[[1.0,7.0,0.0,1,2,3,4,5,1.0,0.0],[1,7,1,3,4,3,4,5,0,1]]";
        let out = parse_jta(src.as_bytes(), "v", 2).unwrap();
        assert!(out[0].joints[0].occluded && out[0].joints[1].self_occluded);
    }
}
