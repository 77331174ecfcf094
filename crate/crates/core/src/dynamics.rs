//! Zero-weight censuses and abrupt-sparsification detection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::source::{load_checked, normalize_infos, TensorInfo, WeightSource};
use crate::{magnitude, CoreError, Executor};

/// Smallest single-step rise in zero fraction reported as abrupt.
pub const DEFAULT_MIN_JUMP: f64 = 0.05;

/// Counts of weights with `|w| <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCensus {
    pub tolerance: f64,
    pub per_tensor: BTreeMap<String, u64>,
    pub total: u64,
    pub prunable_total: u64,
}

impl ZeroCensus {
    pub fn zero_fraction(&self) -> f64 {
        if self.prunable_total == 0 {
            0.0
        } else {
            self.total as f64 / self.prunable_total as f64
        }
    }
}

pub fn count_near_zero(values: &[f64], tolerance: f64) -> u64 {
    values
        .iter()
        .filter(|&&v| magnitude(v) <= tolerance)
        .count() as u64
}

pub fn zero_census<S, E>(
    source: &S,
    infos: &[TensorInfo],
    tolerance: f64,
    exec: &E,
) -> Result<ZeroCensus, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(CoreError::InvalidTolerance.into());
    }
    let infos = normalize_infos(infos)?;
    let counts = exec.map(&infos, |info| {
        load_checked(source, info).map(|values| count_near_zero(&values, tolerance))
    });
    let mut census = ZeroCensus {
        tolerance,
        per_tensor: BTreeMap::new(),
        total: 0,
        prunable_total: 0,
    };
    for (info, count) in infos.iter().zip(counts) {
        let count = count?;
        census.total += count;
        census.prunable_total += info.numel() as u64;
        census.per_tensor.insert(info.name.clone(), count);
    }
    Ok(census)
}

/// Iteration at the end of the largest single-step rise in zero fraction,
/// if that rise reaches `min_jump`. Equal rises resolve to the earliest.
pub fn detect_abrupt(series: &[(u64, f64)], min_jump: f64) -> Result<Option<u64>, CoreError> {
    if series.len() < 2 {
        return Err(CoreError::TooFewPoints);
    }
    if let Some(i) = series.windows(2).position(|w| w[0].0 >= w[1].0) {
        return Err(CoreError::UnsortedIterations(i + 1));
    }
    let mut best: Option<(f64, u64)> = None;
    for w in series.windows(2) {
        let jump = w[1].1 - w[0].1;
        if best.is_none_or(|(b, _)| jump > b) {
            best = Some((jump, w[1].0));
        }
    }
    Ok(best.and_then(|(jump, it)| (jump >= min_jump).then_some(it)))
}

/// Fractions in series order for a census series.
pub fn census_fractions(censuses: &[(u64, ZeroCensus)]) -> Vec<(u64, f64)> {
    censuses
        .iter()
        .map(|(it, c)| (*it, c.zero_fraction()))
        .collect()
}
