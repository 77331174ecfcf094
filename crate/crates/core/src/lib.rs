//! Allocation-only core of the sparsity toolkit.
//!
//! Everything here is pure computation over widened `f64` weights and packed
//! binary masks: magnitude threshold selection, one-shot magnitude pruning,
//! N:M structured masks, mask similarity and nesting, essential-sparsity
//! detection on sampled curves, zero-weight censuses and weight histograms.
//!
//! File formats, name filtering and parallel execution live in the
//! `sparsity-tools` crate, which plugs into the [`WeightSource`] and
//! [`Executor`] traits defined here.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod curve;
pub mod dtype;
pub mod dynamics;
mod error;
pub mod exec;
pub mod mask;
pub mod prune;
pub mod report;
pub mod source;

pub use curve::{
    detect_essential, drop_curve, DetectionMode, EssentialSparsityResult, SparsityCurve,
    DEFAULT_EPS,
};
pub use dtype::DType;
pub use dynamics::{detect_abrupt, zero_census, ZeroCensus, DEFAULT_MIN_JUMP};
pub use error::CoreError;
pub use exec::{Executor, Sequential};
pub use mask::{FilterSpec, MaskSet, Provenance, TensorMask};
pub use prune::{
    exact_count, imp_schedule, nm_prune, omp_global, omp_per_tensor, select_global_threshold,
    NmPattern, PruneSpec, Scope, ThresholdResult,
};
pub use report::{
    component_report, tensor_histogram, weight_histogram, ComponentReport, ComponentRow,
    ComponentRule, HistogramReport, NameMatcher, Normalization, TensorHistogram,
};
pub use source::{InMemorySource, TensorInfo, WeightSource};

/// Magnitude of a weight with the sign bit cleared, so `-0.0` and `0.0` coincide.
#[inline]
pub(crate) fn magnitude(x: f64) -> f64 {
    f64::from_bits(x.to_bits() & !(1u64 << 63))
}
