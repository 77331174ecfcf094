//! Essential-sparsity detection on sampled sparsity-performance curves.
//!
//! With `T = dense - eps`, the essential sparsity is the last sampled
//! sparsity that still meets `T` right before the curve falls below it. The
//! pruning increment of the definition is the sampling grid step.

use alloc::vec::Vec;

use crate::CoreError;

/// Tolerated drop for metrics on a [0, 1] scale.
pub const DEFAULT_EPS: f64 = 0.01;

/// Sampled `(sparsity, metric)` points, higher metric is better.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityCurve {
    points: Vec<(f64, f64)>,
    dense_metric: f64,
}

impl SparsityCurve {
    pub fn new(points: Vec<(f64, f64)>, dense_metric: f64) -> Result<Self, CoreError> {
        if !dense_metric.is_finite() {
            return Err(CoreError::NonFiniteDense);
        }
        for (i, &(s, m)) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) || !m.is_finite() {
                return Err(CoreError::InvalidPoint(i));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[0].0 >= w[1].0) {
            return Err(CoreError::UnsortedPoints(i + 1));
        }
        Ok(SparsityCurve {
            points,
            dense_metric,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn dense_metric(&self) -> f64 {
        self.dense_metric
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionMode {
    /// Stop at the first violation of the threshold.
    #[default]
    FirstCrossing,
    /// The violation must persist through the end of the curve.
    Sustained,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialSparsityResult {
    pub essential_sparsity: Option<f64>,
    pub threshold: f64,
    pub mode: DetectionMode,
    pub no_crossing: bool,
    pub dense_below_threshold: bool,
}

pub fn detect_essential(
    curve: &SparsityCurve,
    eps: f64,
    mode: DetectionMode,
) -> Result<EssentialSparsityResult, CoreError> {
    if curve.points.len() < 2 {
        return Err(CoreError::TooFewPoints);
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(CoreError::InvalidTolerance);
    }
    let threshold = curve.dense_metric - eps;
    let mut result = EssentialSparsityResult {
        essential_sparsity: None,
        threshold,
        mode,
        no_crossing: false,
        dense_below_threshold: false,
    };
    let meets: Vec<bool> = curve.points.iter().map(|&(_, m)| m >= threshold).collect();
    if !meets[0] {
        result.dense_below_threshold = true;
        return Ok(result);
    }
    let index = match mode {
        DetectionMode::FirstCrossing => meets.iter().position(|&ok| !ok).map(|v| v - 1),
        DetectionMode::Sustained => {
            // last point meeting T, provided some later point exists
            let last = meets.iter().rposition(|&ok| ok).unwrap_or(0);
            (last + 1 < meets.len()).then_some(last)
        }
    };
    match index {
        Some(i) => result.essential_sparsity = Some(curve.points[i].0),
        None => result.no_crossing = true,
    }
    Ok(result)
}

/// `(sparsity, metric - dense)` at every sampled point.
pub fn drop_curve(curve: &SparsityCurve) -> Vec<(f64, f64)> {
    curve
        .points
        .iter()
        .map(|&(s, m)| (s, m - curve.dense_metric))
        .collect()
}
