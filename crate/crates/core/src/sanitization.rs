//! Distance analysis and far-pedestrian pruning.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::AnnotatedBox;

/// Annotators of real-world datasets skip pedestrians beyond this distance.
pub const DEFAULT_DISTANCE_LIMIT_M: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SanitizationError {
    #[error("no annotations to analyze")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Bin `k` covers `[k * bin_width_m, (k + 1) * bin_width_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub bin_width_m: f64,
    pub counts: Vec<u64>,
}

impl DistanceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `bin_lower_m,count` CSV, one row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lower_m,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", k as f64 * self.bin_width_m, c);
        }
        out
    }
}

/// Index of the bin containing `d`, consistent with the multiplied-out bin
/// edges even where `d / width` rounds across an edge.
fn bin_index(d: f64, width: f64) -> usize {
    let mut k = (d / width).floor().max(0.0) as usize;
    while k > 0 && k as f64 * width > d {
        k -= 1;
    }
    while (k + 1) as f64 * width <= d {
        k += 1;
    }
    k
}

fn check_distances(annotations: &[AnnotatedBox]) -> Result<(), SanitizationError> {
    match annotations
        .iter()
        .find(|a| !(a.distance_m.is_finite() && a.distance_m >= 0.0))
    {
        Some(a) => Err(SanitizationError::InvalidArgument(format!(
            "annotation {}/{}/{} has invalid distance {}",
            a.video_id, a.frame_id, a.pedestrian_id, a.distance_m
        ))),
        None => Ok(()),
    }
}

pub fn distance_histogram(
    annotations: &[AnnotatedBox],
    bin_width_m: f64,
) -> Result<DistanceHistogram, SanitizationError> {
    if !(bin_width_m.is_finite() && bin_width_m > 0.0) {
        return Err(SanitizationError::InvalidArgument(format!(
            "bin width must be positive, got {bin_width_m}"
        )));
    }
    check_distances(annotations)?;
    let mut counts: Vec<u64> = Vec::new();
    for a in annotations {
        let k = bin_index(a.distance_m, bin_width_m);
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    Ok(DistanceHistogram {
        bin_width_m,
        counts,
    })
}

/// Keeps annotations at most `max_dist_m` away, preserving order. Returns the
/// kept list and the number pruned.
pub fn prune_by_distance(
    annotations: &[AnnotatedBox],
    max_dist_m: f64,
) -> Result<(Vec<AnnotatedBox>, usize), SanitizationError> {
    if max_dist_m.is_nan() || max_dist_m <= 0.0 {
        return Err(SanitizationError::InvalidArgument(format!(
            "distance limit must be positive, got {max_dist_m}"
        )));
    }
    let kept: Vec<AnnotatedBox> = annotations
        .iter()
        .filter(|a| a.distance_m <= max_dist_m)
        .cloned()
        .collect();
    let pruned = annotations.len() - kept.len();
    Ok((kept, pruned))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceLimitOptions {
    pub bin_width_m: f64,
    /// Bins with fewer annotations than this are ignored.
    pub min_bin_count: usize,
}

impl Default for DistanceLimitOptions {
    fn default() -> Self {
        Self {
            bin_width_m: 1.0,
            min_bin_count: 10,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Distance at which the median box height first falls below `h_min_px`,
/// the smallest height human annotators label in real footage.
///
/// Returns the lower edge of the nearest sufficiently populated bin whose
/// median height is below the floor, or the largest observed distance when no
/// bin qualifies.
pub fn derive_distance_limit(
    annotations: &[AnnotatedBox],
    h_min_px: f64,
    opts: DistanceLimitOptions,
) -> Result<f64, SanitizationError> {
    if annotations.is_empty() {
        return Err(SanitizationError::EmptyInput);
    }
    if !(h_min_px.is_finite() && h_min_px >= 0.0) {
        return Err(SanitizationError::InvalidArgument(format!(
            "minimum height must be >= 0, got {h_min_px}"
        )));
    }
    if !(opts.bin_width_m.is_finite() && opts.bin_width_m > 0.0) {
        return Err(SanitizationError::InvalidArgument(format!(
            "bin width must be positive, got {}",
            opts.bin_width_m
        )));
    }
    check_distances(annotations)?;

    let mut bins: Vec<Vec<f64>> = Vec::new();
    for a in annotations {
        let k = bin_index(a.distance_m, opts.bin_width_m);
        if k >= bins.len() {
            bins.resize_with(k + 1, Vec::new);
        }
        bins[k].push(a.bbox.h);
    }
    for (k, heights) in bins.iter_mut().enumerate() {
        if heights.is_empty() || heights.len() < opts.min_bin_count {
            continue;
        }
        if median(heights) < h_min_px {
            return Ok(k as f64 * opts.bin_width_m);
        }
    }
    Ok(annotations
        .iter()
        .map(|a| a.distance_m)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn at(distance_m: f64, h: f64) -> AnnotatedBox {
        AnnotatedBox {
            video_id: "v".into(),
            frame_id: 1,
            pedestrian_id: 0,
            bbox: BBox::new(0.0, 0.0, h / 3.0, h),
            distance_m,
            skeleton_box: BBox::new(0.0, 0.0, h / 3.0, h),
        }
    }

    #[test]
    fn histogram_direct_binning() {
        let anns: Vec<_> = [1.0, 1.5, 2.5].iter().map(|&d| at(d, 10.0)).collect();
        let h = distance_histogram(&anns, 1.0).unwrap();
        assert_eq!(h.counts, vec![0, 2, 1]);
        assert_eq!(h.to_csv(), "bin_lower_m,count\n0,0\n1,2\n2,1\n");
        assert!(distance_histogram(&[], 1.0).unwrap().counts.is_empty());
        assert!(distance_histogram(&[], 0.0).is_err());
    }

    #[test]
    fn bin_index_respects_multiplied_edges() {
        // 0.3 / 0.1 rounds to 2.999..., and 3 * 0.1 > 0.3, so 0.3 is in bin 2.
        assert_eq!(bin_index(0.3, 0.1), 2);
        assert_eq!(bin_index(0.30000000000000004, 0.1), 3);
        assert_eq!(bin_index(40.0, 1.0), 40);
    }

    #[test]
    fn prune_boundary_is_inclusive() {
        let anns: Vec<_> = [41.0, 39.0, 40.0].iter().map(|&d| at(d, 10.0)).collect();
        let (kept, pruned) = prune_by_distance(&anns, DEFAULT_DISTANCE_LIMIT_M).unwrap();
        assert_eq!(
            kept.iter().map(|a| a.distance_m).collect::<Vec<_>>(),
            vec![39.0, 40.0]
        );
        assert_eq!(pruned, 1);
        assert_eq!(prune_by_distance(&[], 40.0).unwrap(), (vec![], 0));
        assert!(prune_by_distance(&anns, 0.0).is_err());
    }

    #[test]
    fn distance_limit_edge_cases() {
        let mut anns = Vec::new();
        for k in 5..30 {
            for i in 0..12 {
                anns.push(at(k as f64 + i as f64 / 12.0, 1000.0 / k as f64));
            }
        }
        let opts = DistanceLimitOptions::default();
        assert_eq!(derive_distance_limit(&anns, 1e6, opts).unwrap(), 5.0);
        let max = anns.iter().map(|a| a.distance_m).fold(0.0, f64::max);
        assert_eq!(derive_distance_limit(&anns, 0.0, opts).unwrap(), max);
        assert_eq!(
            derive_distance_limit(&[], 10.0, opts),
            Err(SanitizationError::EmptyInput)
        );
    }

    #[test]
    fn sparse_bins_are_ignored() {
        let mut anns: Vec<_> = (0..10).map(|i| at(20.0 + i as f64 / 10.0, 10.0)).collect();
        anns.extend((0..9).map(|i| at(5.0 + i as f64 / 10.0, 1.0)));
        let limit = derive_distance_limit(&anns, 5.0, DistanceLimitOptions::default()).unwrap();
        assert_eq!(limit, 20.0 + 9.0 / 10.0);
        let limit = derive_distance_limit(&anns, 20.0, DistanceLimitOptions::default()).unwrap();
        assert_eq!(limit, 20.0);
    }
}
