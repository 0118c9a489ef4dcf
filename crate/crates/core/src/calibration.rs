//! Least-squares estimate of the padding constant `alpha` from manually
//! measured full-body heights.
//!
//! The mesh-height model `h_true = h_s + alpha / z` has no intercept, so the
//! fit is a zero-intercept regression of `d = h_true - h_s` on `u = 1 / z`:
//! `alpha = sum(d * u) / sum(u * u)`.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLE_CSV_HEADER: [&str; 3] = ["h_s_px", "z_m", "h_true_px"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no calibration samples")]
    EmptySampleSet,
    #[error("invalid sample at row {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: invalid sample: {reason}")]
    InvalidSampleLine { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub h_s: f64,
    pub z: f64,
    pub h_true: f64,
}

impl CalibrationSample {
    pub fn new(h_s: f64, z: f64, h_true: f64) -> Self {
        Self { h_s, z, h_true }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [("h_s", self.h_s), ("z", self.z), ("h_true", self.h_true)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub n_samples: usize,
    pub rmse_px: f64,
    pub max_abs_residual_px: f64,
}

impl CalibrationResult {
    /// Mesh height predicted for a skeleton height at distance `z`.
    pub fn predict(&self, h_s: f64, z: f64) -> f64 {
        h_s + self.alpha / z
    }
}

pub fn fit_alpha(samples: &[CalibrationSample]) -> Result<CalibrationResult, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptySampleSet);
    }
    for (index, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|reason| CalibrationError::InvalidSample { index, reason })?;
    }
    // Regress on u = z_ref / z instead of 1 / z: the same least-squares
    // problem scaled by z_ref, but with u <= 1, and a single sample reduces
    // to the exact product (h_true - h_s) * z.
    let z_ref = samples.iter().map(|s| s.z).fold(f64::INFINITY, f64::min);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut negative = 0usize;
    for s in samples {
        let d = s.h_true - s.h_s;
        if d < 0.0 {
            negative += 1;
        }
        let u = z_ref / s.z;
        num += d * u;
        den += u * u;
    }
    if negative > 0 {
        log::warn!("{negative} calibration sample(s) measured shorter than their skeleton box");
    }
    let alpha = z_ref * (num / den);

    let mut sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for s in samples {
        let r = s.h_true - (s.h_s + alpha / s.z);
        sq += r * r;
        max_abs = max_abs.max(r.abs());
    }
    Ok(CalibrationResult {
        alpha,
        n_samples: samples.len(),
        rmse_px: (sq / samples.len() as f64).sqrt(),
        max_abs_residual_px: max_abs,
    })
}

/// Reads `h_s_px,z_m,h_true_px` rows. Line numbers in errors are 1-based and
/// count the header.
pub fn load_calibration_samples<R: Read>(
    source: R,
) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| CalibrationError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().ne(SAMPLE_CSV_HEADER.iter().copied()) {
        return Err(CalibrationError::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, got `{}`",
                SAMPLE_CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CalibrationError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = [0.0; 3];
        for (slot, (field, name)) in values.iter_mut().zip(record.iter().zip(SAMPLE_CSV_HEADER)) {
            *slot = field.parse::<f64>().map_err(|_| CalibrationError::Parse {
                line,
                message: format!("{name}: `{field}` is not a number"),
            })?;
        }
        let sample = CalibrationSample::new(values[0], values[1], values[2]);
        sample
            .validate()
            .map_err(|reason| CalibrationError::InvalidSampleLine { line, reason })?;
        samples.push(sample);
    }
    Ok(samples)
}
