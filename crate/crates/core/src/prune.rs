//! One-shot magnitude pruning and N:M structured masks.
//!
//! Global selection never holds more than one tensor's values plus the
//! contents of a single histogram bucket. Magnitudes are bucketed by the top
//! 16 bits of their IEEE-754 pattern; for non-negative finite floats the bit
//! order equals the numeric order, so the bucket holding the k-th smallest
//! magnitude can be found from counts alone and then ranked exactly.
//!
//! Exactly `round_half_even(target · count)` weights are pruned. Weights equal
//! to the threshold magnitude are pruned in (tensor name, flat index) order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::mask::{FilterSpec, MaskSet, Provenance, TensorMask};
use crate::source::{load_checked, normalize_infos, TensorInfo, WeightSource};
use crate::{magnitude, CoreError, Executor};

const BUCKETS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    PerTensor,
}

/// At most `n` kept weights in every group of `m` consecutive weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NmPattern {
    n: usize,
    m: usize,
}

impl NmPattern {
    pub fn new(n: usize, m: usize) -> Result<Self, CoreError> {
        if m == 0 || n == 0 || n > m {
            return Err(CoreError::InvalidNm { n, m });
        }
        Ok(NmPattern { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sparsity of a full group, `(m - n) / m`.
    pub fn group_sparsity(&self) -> f64 {
        (self.m - self.n) as f64 / self.m as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneSpec {
    pub scope: Scope,
    pub target_sparsity: f64,
    pub prunable_filter: FilterSpec,
    pub nm: Option<NmPattern>,
    /// Axis along which N:M groups run; `None` is the last axis.
    pub nm_axis: Option<usize>,
}

impl PruneSpec {
    pub fn global(target_sparsity: f64) -> Self {
        PruneSpec {
            scope: Scope::Global,
            target_sparsity,
            prunable_filter: FilterSpec::default_prunable(),
            nm: None,
            nm_axis: None,
        }
    }

    pub fn per_tensor(target_sparsity: f64) -> Self {
        PruneSpec {
            scope: Scope::PerTensor,
            ..Self::global(target_sparsity)
        }
    }

    pub fn nm(pattern: NmPattern) -> Self {
        PruneSpec {
            nm: Some(pattern),
            target_sparsity: pattern.group_sparsity(),
            ..Self::global(0.0)
        }
    }

    pub fn with_filter(mut self, filter: FilterSpec) -> Self {
        self.prunable_filter = filter;
        self
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        check_target(self.target_sparsity)?;
        if let Some(p) = self.nm {
            NmPattern::new(p.n, p.m)?;
        }
        Ok(())
    }
}

/// Outcome of exact threshold selection over the prunable weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub threshold: f64,
    /// Prunable weights with magnitude strictly below the threshold.
    pub below_count: u64,
    /// Prunable weights with magnitude equal to the threshold.
    pub at_count: u64,
    /// Threshold-magnitude weights pruned to reach the exact count.
    pub ties_pruned: u64,
    pub prunable_count: u64,
}

impl ThresholdResult {
    pub fn pruned_count(&self) -> u64 {
        self.below_count + self.ties_pruned
    }
}

fn check_target(target: f64) -> Result<(), CoreError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(CoreError::InvalidSparsity(target));
    }
    Ok(())
}

/// Number of weights to prune: `target · total`, rounded half to even.
pub fn exact_count(target: f64, total: u64) -> u64 {
    let k = libm::rint(target * total as f64);
    (k.max(0.0) as u64).min(total)
}

#[inline]
fn bucket_of(mag: f64) -> usize {
    (mag.to_bits() >> 48) as usize
}

fn histogram(values: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; BUCKETS];
    for &v in values {
        counts[bucket_of(magnitude(v))] += 1;
    }
    counts
}

struct GlobalPlan {
    infos: Vec<TensorInfo>,
    result: ThresholdResult,
    tie_quota: Vec<u64>,
}

fn plan_global<S, E>(
    source: &S,
    infos: &[TensorInfo],
    target: f64,
    exec: &E,
) -> Result<GlobalPlan, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    check_target(target)?;
    let infos = normalize_infos(infos)?;
    if infos.is_empty() {
        return Err(CoreError::EmptyPrunableSet.into());
    }

    // pass 1: bucket counts, merged in name order
    let partial = exec.map(&infos, |info| {
        load_checked(source, info).map(|values| histogram(&values))
    });
    let mut counts = vec![0u64; BUCKETS];
    for h in partial {
        for (acc, c) in counts.iter_mut().zip(h?) {
            *acc += c;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CoreError::EmptyPrunableSet.into());
    }

    let k = exact_count(target, total);
    let rank = k.min(total - 1);
    let mut below_bucket = 0u64;
    let mut boundary = 0usize;
    for (b, &c) in counts.iter().enumerate() {
        if below_bucket + c > rank {
            boundary = b;
            break;
        }
        below_bucket += c;
    }
    drop(counts);

    // pass 2: exact ranking inside the boundary bucket
    let members = exec.map(&infos, |info| {
        load_checked(source, info).map(|values| {
            values
                .iter()
                .map(|&v| magnitude(v))
                .filter(|&m| bucket_of(m) == boundary)
                .collect::<Vec<f64>>()
        })
    });
    let members = members.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut bucket: Vec<f64> = members.iter().flatten().copied().collect();
    bucket.sort_unstable_by(f64::total_cmp);
    let threshold = bucket[(rank - below_bucket) as usize];
    let below_count = below_bucket + bucket.partition_point(|&m| m < threshold) as u64;
    let at_count = bucket.iter().filter(|&&m| m == threshold).count() as u64;
    let ties_pruned = k - below_count;

    let mut remaining = ties_pruned;
    let tie_quota = members
        .iter()
        .map(|ms| {
            let at = ms.iter().filter(|&&m| m == threshold).count() as u64;
            let q = remaining.min(at);
            remaining -= q;
            q
        })
        .collect();

    Ok(GlobalPlan {
        infos,
        result: ThresholdResult {
            threshold,
            below_count,
            at_count,
            ties_pruned,
            prunable_count: total,
        },
        tie_quota,
    })
}

/// Keeps everything above `threshold`; prunes everything below it and the
/// first `quota` entries equal to it.
fn magnitude_mask(values: &[f64], shape: &[usize], threshold: f64, quota: u64) -> TensorMask {
    let mut ties = 0u64;
    TensorMask::from_fn(shape, |i| {
        let m = magnitude(values[i]);
        if m < threshold {
            false
        } else if m == threshold && ties < quota {
            ties += 1;
            false
        } else {
            true
        }
    })
}

/// Exact global magnitude threshold over all prunable weights.
pub fn select_global_threshold<S, E>(
    source: &S,
    infos: &[TensorInfo],
    spec: &PruneSpec,
    exec: &E,
) -> Result<ThresholdResult, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    spec.validate()?;
    Ok(plan_global(source, infos, spec.target_sparsity, exec)?.result)
}

/// Global one-shot magnitude pruning.
pub fn omp_global<S, E>(
    source: &S,
    infos: &[TensorInfo],
    spec: &PruneSpec,
    exec: &E,
) -> Result<(MaskSet, ThresholdResult), S::Error>
where
    S: WeightSource,
    E: Executor,
{
    spec.validate()?;
    let plan = plan_global(source, infos, spec.target_sparsity, exec)?;
    let threshold = plan.result.threshold;
    let jobs: Vec<(&TensorInfo, u64)> = plan
        .infos
        .iter()
        .zip(plan.tie_quota.iter().copied())
        .collect();
    let masks = exec.map(&jobs, |(info, quota)| {
        load_checked(source, info)
            .map(|values| magnitude_mask(&values, &info.shape, threshold, *quota))
    });
    let mut set = MaskSet::new(provenance("omp-global", spec));
    for ((info, _), mask) in jobs.iter().zip(masks) {
        set.insert(info.name.clone(), mask?);
    }
    Ok((set, plan.result))
}

/// Prunes each tensor independently to the target sparsity.
pub fn omp_per_tensor<S, E>(
    source: &S,
    infos: &[TensorInfo],
    spec: &PruneSpec,
    exec: &E,
) -> Result<MaskSet, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    spec.validate()?;
    let infos = normalize_infos(infos)?;
    if infos.is_empty() {
        return Err(CoreError::EmptyPrunableSet.into());
    }
    let target = spec.target_sparsity;
    let masks = exec.map(&infos, |info| {
        let values = load_checked(source, info)?;
        let n = values.len() as u64;
        let k = exact_count(target, n);
        let rank = k.min(n - 1) as usize;
        let mut mags: Vec<f64> = values.iter().map(|&v| magnitude(v)).collect();
        let (_, &mut threshold, _) = mags.select_nth_unstable_by(rank, f64::total_cmp);
        let below = values.iter().filter(|&&v| magnitude(v) < threshold).count() as u64;
        Ok::<_, S::Error>(magnitude_mask(&values, &info.shape, threshold, k - below))
    });
    let mut set = MaskSet::new(provenance("omp-per-tensor", spec));
    for (info, mask) in infos.iter().zip(masks) {
        set.insert(info.name.clone(), mask?);
    }
    Ok(set)
}

/// Keeps the `n` largest magnitudes in every aligned group of `m` along the
/// grouping axis; a trailing partial group of length `l` keeps `min(n, l)`.
pub fn nm_prune<S, E>(
    source: &S,
    infos: &[TensorInfo],
    spec: &PruneSpec,
    exec: &E,
) -> Result<MaskSet, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    spec.validate()?;
    let pattern = spec.nm.ok_or(CoreError::InvalidNm { n: 0, m: 0 })?;
    let infos = normalize_infos(infos)?;
    if infos.is_empty() {
        return Err(CoreError::EmptyPrunableSet.into());
    }
    for info in &infos {
        if let Some(axis) = spec.nm_axis {
            if axis >= info.shape.len().max(1) {
                return Err(CoreError::InvalidAxis {
                    tensor: info.name.clone(),
                    axis,
                }
                .into());
            }
        }
    }
    let masks = exec.map(&infos, |info| {
        let values = load_checked(source, info)?;
        Ok::<_, S::Error>(nm_mask(&values, &info.shape, pattern, spec.nm_axis))
    });
    let mut set = MaskSet::new(Provenance {
        method: format!("nm-{}:{}", pattern.n, pattern.m),
        ..provenance("", spec)
    });
    set.provenance.target_sparsity = pattern.group_sparsity();
    for (info, mask) in infos.iter().zip(masks) {
        set.insert(info.name.clone(), mask?);
    }
    Ok(set)
}

fn nm_mask(values: &[f64], shape: &[usize], pattern: NmPattern, axis: Option<usize>) -> TensorMask {
    let (outer, lane, inner) = match shape.len() {
        0 => (1, 1, 1),
        rank => {
            let axis = axis.unwrap_or(rank - 1);
            (
                shape[..axis].iter().product::<usize>(),
                shape[axis],
                shape[axis + 1..].iter().product::<usize>(),
            )
        }
    };
    let mut keep = vec![false; values.len()];
    let mut group: Vec<(f64, usize)> = Vec::with_capacity(pattern.m);
    for o in 0..outer {
        for i in 0..inner {
            let base = o * lane * inner + i;
            for start in (0..lane).step_by(pattern.m) {
                group.clear();
                group.extend((start..lane.min(start + pattern.m)).map(|j| {
                    let idx = base + j * inner;
                    (magnitude(values[idx]), idx)
                }));
                group.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                for &(_, idx) in group.iter().take(pattern.n) {
                    keep[idx] = true;
                }
            }
        }
    }
    TensorMask::from_fn(shape, |i| keep[i])
}

/// Dispatches on `spec`: N:M when a pattern is set, otherwise by scope.
pub fn prune<S, E>(
    source: &S,
    infos: &[TensorInfo],
    spec: &PruneSpec,
    exec: &E,
) -> Result<MaskSet, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    match (spec.nm, spec.scope) {
        (Some(_), _) => nm_prune(source, infos, spec, exec),
        (None, Scope::Global) => omp_global(source, infos, spec, exec).map(|(set, _)| set),
        (None, Scope::PerTensor) => omp_per_tensor(source, infos, spec, exec),
    }
}

fn provenance(method: &str, spec: &PruneSpec) -> Provenance {
    Provenance {
        method: method.into(),
        target_sparsity: spec.target_sparsity,
        source_digest: alloc::string::String::new(),
        prunable_filter: spec.prunable_filter.clone(),
    }
}

/// Cumulative sparsity after each of `rounds` prune-and-rewind rounds that
/// each remove `per_round_fraction` of the surviving weights.
pub fn imp_schedule(rounds: usize, per_round_fraction: f64) -> Result<Vec<f64>, CoreError> {
    if rounds == 0 {
        return Err(CoreError::InvalidRounds);
    }
    if !(per_round_fraction > 0.0 && per_round_fraction < 1.0) {
        return Err(CoreError::InvalidFraction(per_round_fraction));
    }
    let mut surviving = 1.0;
    Ok((0..rounds)
        .map(|_| {
            surviving *= 1.0 - per_round_fraction;
            1.0 - surviving
        })
        .collect())
}
