//! Container-level operations shared by the CLI and library users.

use std::io::Write;

use serde::Serialize;
use sparsity_core::{
    omp_global, prune::prune, Executor, MaskSet, PruneSpec, Scope, TensorInfo, ThresholdResult,
};

use crate::container::{write_container_streaming, Container, TensorLayout};
use crate::error::{Error, Result};
use crate::filter::TensorFilter;

pub fn prunable_infos(container: &Container, filter: &TensorFilter) -> Vec<TensorInfo> {
    container.infos(filter)
}

/// Prunes the tensors selected by `filter` and stamps the mask with the
/// filter and the container digest. The threshold is reported for global
/// magnitude pruning only.
pub fn prune_container<E: Executor>(
    container: &Container,
    spec: &PruneSpec,
    filter: &TensorFilter,
    exec: &E,
) -> Result<(MaskSet, Option<ThresholdResult>)> {
    let spec = spec.clone().with_filter(filter.spec().clone());
    let infos = prunable_infos(container, filter);
    let (mut set, threshold) = match (spec.nm, spec.scope) {
        (None, Scope::Global) => {
            let (set, t) = omp_global(container, &infos, &spec, exec)?;
            (set, Some(t))
        }
        _ => (prune(container, &infos, &spec, exec)?, None),
    };
    set.provenance.source_digest = container.digest()?;
    Ok((set, threshold))
}

/// Writes a copy of `container` with every masked-out weight set to zero.
/// Tensors without a mask pass through unchanged. The mask must have been
/// built from this container unless `force` is set.
pub fn apply_mask<W: Write>(
    container: &Container,
    set: &MaskSet,
    force: bool,
    out: &mut W,
) -> Result<()> {
    set.verify()?;
    if !force && !set.provenance.source_digest.is_empty() {
        let actual = container.digest()?;
        if actual != set.provenance.source_digest {
            return Err(Error::DigestMismatch {
                expected: set.provenance.source_digest.clone(),
                actual,
            });
        }
    }
    for (name, mask) in &set.masks {
        let meta = container.meta(name)?;
        if meta.shape != mask.shape() {
            return Err(sparsity_core::CoreError::ShapeMismatch {
                tensor: name.clone(),
            }
            .into());
        }
    }
    let layouts: Vec<TensorLayout> = container
        .metas()
        .map(|m| TensorLayout {
            name: m.name.clone(),
            dtype: m.dtype,
            shape: m.shape.clone(),
        })
        .collect();
    write_container_streaming(out, &layouts, container.metadata(), |l| {
        let mut raw = container.read_raw(&l.name)?;
        if let Some(mask) = set.get(&l.name) {
            mask.zero_pruned(&mut raw, l.dtype.byte_width())?;
        }
        Ok(raw)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSummary {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inventory {
    pub tensors: Vec<TensorSummary>,
    pub total_params: u64,
    pub source_digest: String,
}

/// Tensors selected by `filter`, with their parameter total and the
/// container digest.
pub fn inspect(container: &Container, filter: &TensorFilter) -> Result<Inventory> {
    let tensors: Vec<TensorSummary> = container
        .list_tensors(filter)
        .into_iter()
        .map(|m| TensorSummary {
            name: m.name.clone(),
            shape: m.shape.clone(),
            dtype: m.dtype.tag().into(),
            bytes: m.byte_range.end - m.byte_range.start,
        })
        .collect();
    let total_params = tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() as u64)
        .sum();
    Ok(Inventory {
        tensors,
        total_params,
        source_digest: container.digest()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::{encode_container, TensorEntry};
    use sparsity_core::{DType, Sequential};

    fn fixture() -> Container {
        let bytes = encode_container(
            vec![
                TensorEntry::values(
                    "layer.weight",
                    DType::F32,
                    vec![2, 3],
                    vec![0.5, -0.1, 0.3, -0.7, 0.2, 0.05],
                ),
                TensorEntry::values("layer.bias", DType::F32, vec![3], vec![0.01, 0.02, 0.03]),
                TensorEntry::values(
                    "embed.weight",
                    DType::F16,
                    vec![2, 2],
                    vec![0.0, 1.0, 2.0, 3.0],
                ),
            ],
            None,
        )
        .unwrap();
        Container::from_bytes(bytes).unwrap()
    }

    #[test]
    fn prune_stamps_provenance() {
        let c = fixture();
        let f = TensorFilter::default_prunable();
        let (set, t) = prune_container(&c, &PruneSpec::global(0.5), &f, &Sequential).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.provenance.source_digest, c.digest().unwrap());
        assert_eq!(set.provenance.prunable_filter, *f.spec());
        assert_eq!(t.unwrap().pruned_count(), 3);
        assert_eq!(set.sparsity().unwrap(), 0.5);
    }

    #[test]
    fn apply_zeroes_and_is_idempotent() {
        let c = fixture();
        let f = TensorFilter::default_prunable();
        let (set, _) = prune_container(&c, &PruneSpec::global(0.5), &f, &Sequential).unwrap();
        let mut once = Vec::new();
        apply_mask(&c, &set, false, &mut once).unwrap();
        let applied = Container::from_bytes(once.clone()).unwrap();
        assert_eq!(
            applied.read_values("layer.weight").unwrap(),
            vec![0.5, 0.0, 0.30000001192092896, -0.699999988079071, 0.0, 0.0]
        );
        assert_eq!(
            applied.read_raw("layer.bias").unwrap(),
            c.read_raw("layer.bias").unwrap()
        );

        assert!(matches!(
            apply_mask(&applied, &set, false, &mut Vec::new()),
            Err(Error::DigestMismatch { .. })
        ));
        let mut twice = Vec::new();
        apply_mask(&applied, &set, true, &mut twice).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn inventory() {
        let c = fixture();
        let inv = inspect(&c, &TensorFilter::all()).unwrap();
        assert_eq!(inv.total_params, 13);
        assert_eq!(inv.tensors[0].name, "embed.weight");
        assert_eq!(inv.tensors[0].bytes, 8);
        assert_eq!(inv.source_digest.len(), 64);
    }
}
