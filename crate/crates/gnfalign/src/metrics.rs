//! Normalized landmark error and cumulative error distributions.

use gnfalign_core::shape_model::Shape;
use gnfalign_core::Error as CoreError;

use crate::error::Result;

/// Face-scale normalizer of the point-to-point error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    /// Distance between the mean left-eye and mean right-eye landmark of the
    /// ibug 68-point (indices 36..42 and 42..48) or 51-point (19..25, 25..31) layouts.
    InterPupil,
    /// `sqrt(w * h)` of the face box.
    BBoxSize { w: f64, h: f64 },
    /// An explicit normalizer value.
    Fixed(f64),
}

fn eye_ranges(n: usize) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    match n {
        68 => Some((36..42, 42..48)),
        51 => Some((19..25, 25..31)),
        _ => None,
    }
}

fn mean_point(shape: &Shape, range: std::ops::Range<usize>) -> [f64; 2] {
    let pts = &shape.points()[range];
    let k = pts.len() as f64;
    let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / k, s[1] / k]
}

/// Distance between the eye centers of `shape`.
pub fn inter_pupil_distance(shape: &Shape) -> Result<f64> {
    let (l, r) = eye_ranges(shape.len()).ok_or_else(|| {
        CoreError::InvalidArgument(format!("inter-pupil distance undefined for {} landmarks", shape.len()))
    })?;
    let (a, b) = (mean_point(shape, l), mean_point(shape, r));
    Ok(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
}

impl Normalizer {
    /// The normalizer value for a ground-truth shape.
    pub fn value(&self, truth: &Shape) -> Result<f64> {
        match *self {
            Normalizer::InterPupil => inter_pupil_distance(truth),
            Normalizer::BBoxSize { w, h } => Ok((w * h).sqrt()),
            Normalizer::Fixed(v) => Ok(v),
        }
    }
}

/// Mean point-to-point distance divided by the normalizer, in percent.
pub fn nme(predicted: &Shape, truth: &Shape, normalizer: Normalizer) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(CoreError::DimensionMismatch {
            what: "nme landmarks",
            expected: truth.len(),
            actual: predicted.len(),
        }
        .into());
    }
    let d = normalizer.value(truth)?;
    if !(d > 0.0) || !d.is_finite() {
        return Err(CoreError::Domain(format!("normalizer must be positive, got {d}")).into());
    }
    let total: f64 = predicted
        .points()
        .iter()
        .zip(truth.points())
        .map(|(p, t)| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt())
        .sum();
    Ok(100.0 * total / (truth.len() as f64 * d))
}

/// Upper end of the sampled CED range.
pub const CED_MAX: f64 = 20.0;
/// CED threshold step.
pub const CED_STEP: f64 = 0.1;

/// Fraction of errors `<=` each threshold `0, 0.1, ..., 20`, followed by a final
/// `(inf, 1.0)` sample.
pub fn ced(errors: &[f64]) -> Vec<(f64, f64)> {
    let steps = (CED_MAX / CED_STEP).round() as usize;
    let n = errors.len().max(1) as f64;
    let mut out: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let t = i as f64 * CED_STEP;
            (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        })
        .collect();
    out.push((f64::INFINITY, if errors.is_empty() { 0.0 } else { 1.0 }));
    out
}
