//! Weight histograms and per-component sparsity breakdowns.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::source::{load_checked, normalize_infos, TensorInfo, WeightSource};
use crate::{CoreError, Executor, MaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Per-tensor `(x - mean) / std` with the population standard deviation.
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub normalization: Normalization,
    pub per_tensor: BTreeMap<String, TensorHistogram>,
}

fn standardize(values: &mut [f64], tensor: &str) -> Result<(), CoreError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std == 0.0 || !std.is_finite() {
        return Err(CoreError::ZeroVariance {
            tensor: tensor.into(),
        });
    }
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
    Ok(())
}

/// Uniform bins over `[min, max]`; the maximum lands in the last bin. A
/// constant tensor gets a unit-wide range centred on its value.
pub fn tensor_histogram(
    name: &str,
    values: &[f64],
    bins: usize,
    normalization: Normalization,
) -> Result<TensorHistogram, CoreError> {
    if bins == 0 {
        return Err(CoreError::InvalidBins);
    }
    let mut values = values.to_vec();
    if normalization == Normalization::Standardize {
        standardize(&mut values, name)?;
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, hi) = if values.is_empty() {
        (0.0, 1.0)
    } else if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    let mut counts = vec![0u64; bins];
    for v in values {
        let idx = libm::floor((v - lo) / width);
        let idx = if idx < 0.0 {
            0
        } else {
            (idx as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(TensorHistogram { edges, counts })
}

pub fn weight_histogram<S, E>(
    source: &S,
    infos: &[TensorInfo],
    bins: usize,
    normalization: Normalization,
    exec: &E,
) -> Result<HistogramReport, S::Error>
where
    S: WeightSource,
    E: Executor,
{
    if bins == 0 {
        return Err(CoreError::InvalidBins.into());
    }
    let infos = normalize_infos(infos)?;
    let hists = exec.map(&infos, |info| {
        let values = load_checked(source, info)?;
        tensor_histogram(&info.name, &values, bins, normalization).map_err(S::Error::from)
    });
    let mut per_tensor = BTreeMap::new();
    for (info, h) in infos.iter().zip(hists) {
        per_tensor.insert(info.name.clone(), h?);
    }
    Ok(HistogramReport {
        normalization,
        per_tensor,
    })
}

/// Decides whether a tensor name belongs to a component.
pub trait NameMatcher {
    fn matches(&self, name: &str) -> bool;
}

impl<F: Fn(&str) -> bool> NameMatcher for F {
    fn matches(&self, name: &str) -> bool {
        self(name)
    }
}

pub struct ComponentRule<M> {
    pub label: String,
    pub matcher: M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRow {
    pub label: String,
    pub elements: u64,
    pub pruned: u64,
    pub sparsity: f64,
}

impl ComponentRow {
    fn new(label: String, elements: u64, pruned: u64) -> Self {
        let sparsity = if elements == 0 {
            0.0
        } else {
            pruned as f64 / elements as f64
        };
        ComponentRow {
            label,
            elements,
            pruned,
            sparsity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    /// One row per rule that matched at least one tensor, in rule order.
    pub rows: Vec<ComponentRow>,
    pub overall: ComponentRow,
}

/// Assigns every masked tensor to the first matching rule.
pub fn component_report<M: NameMatcher>(
    set: &MaskSet,
    rules: &[ComponentRule<M>],
) -> Result<ComponentReport, CoreError> {
    let mut sums = vec![(0u64, 0u64); rules.len()];
    for (name, mask) in &set.masks {
        let idx = rules
            .iter()
            .position(|r| r.matcher.matches(name))
            .ok_or_else(|| CoreError::UncoveredTensor {
                tensor: name.clone(),
            })?;
        sums[idx].0 += mask.len() as u64;
        sums[idx].1 += mask.pruned();
    }
    let rows = rules
        .iter()
        .zip(sums)
        .filter(|(_, (e, _))| *e > 0)
        .map(|(r, (e, p))| ComponentRow::new(r.label.clone(), e, p))
        .collect();
    let elements = set.numel();
    let overall = ComponentRow {
        label: "overall".into(),
        elements,
        pruned: elements - set.nnz(),
        sparsity: set.sparsity()?,
    };
    Ok(ComponentReport { rows, overall })
}
