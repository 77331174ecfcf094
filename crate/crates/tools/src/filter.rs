//! Glob-style tensor name filters.

use glob::Pattern;
use sparsity_core::FilterSpec;

use crate::error::{Error, Result};

pub(crate) fn compile(pattern: &str) -> Result<Pattern> {
    Pattern::new(pattern).map_err(|e| Error::Pattern {
        pattern: pattern.into(),
        reason: e.msg.into(),
    })
}

/// Selects tensors whose name matches any include pattern and no exclude
/// pattern, and whose rank is at least `min_rank`.
#[derive(Debug, Clone)]
pub struct TensorFilter {
    spec: FilterSpec,
    include: Vec<Pattern>,
    exclude: Vec<Pattern>,
}

impl TensorFilter {
    pub fn new(spec: FilterSpec) -> Result<Self> {
        let include = spec
            .include
            .iter()
            .map(|p| compile(p))
            .collect::<Result<_>>()?;
        let exclude = spec
            .exclude
            .iter()
            .map(|p| compile(p))
            .collect::<Result<_>>()?;
        Ok(TensorFilter {
            spec,
            include,
            exclude,
        })
    }

    pub fn from_patterns(include: &[&str], exclude: &[&str]) -> Result<Self> {
        Self::new(FilterSpec {
            include: include.iter().map(|s| s.to_string()).collect(),
            exclude: exclude.iter().map(|s| s.to_string()).collect(),
            min_rank: 0,
        })
    }

    /// Every tensor.
    pub fn all() -> Self {
        Self::from_patterns(&["*"], &[]).expect("static pattern")
    }

    pub fn default_prunable() -> Self {
        Self::new(FilterSpec::default_prunable()).expect("static patterns")
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn matches(&self, name: &str, shape: &[usize]) -> bool {
        shape.len() >= self.spec.min_rank
            && self.include.iter().any(|p| p.matches(name))
            && !self.exclude.iter().any(|p| p.matches(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 5] = [
        "embeddings.word_embeddings.weight",
        "encoder.layer.0.attention.self.query.weight",
        "encoder.layer.0.attention.self.query.bias",
        "encoder.layer.0.output.LayerNorm.weight",
        "encoder.layer.0.output.dense.weight",
    ];

    #[test]
    fn include_exclude() {
        let f = TensorFilter::from_patterns(&["*.weight"], &["*embed*"]).unwrap();
        let got: Vec<&str> = NAMES
            .iter()
            .copied()
            .filter(|n| f.matches(n, &[2, 2]))
            .collect();
        assert_eq!(
            got,
            [
                "encoder.layer.0.attention.self.query.weight",
                "encoder.layer.0.output.LayerNorm.weight",
                "encoder.layer.0.output.dense.weight",
            ]
        );
    }

    #[test]
    fn default_prunable_filter() {
        let f = TensorFilter::default_prunable();
        let got: Vec<&str> = NAMES
            .iter()
            .copied()
            .filter(|n| f.matches(n, &[4, 4]))
            .collect();
        // "*norm*" is case-sensitive; LayerNorm is caught by rank in real checkpoints
        assert_eq!(
            got,
            [
                "encoder.layer.0.attention.self.query.weight",
                "encoder.layer.0.output.LayerNorm.weight",
                "encoder.layer.0.output.dense.weight",
            ]
        );
        assert!(!f.matches("encoder.layer.0.output.LayerNorm.weight", &[768]));
    }

    #[test]
    fn match_nothing_and_invalid() {
        let f = TensorFilter::from_patterns(&["nothing*"], &[]).unwrap();
        assert!(NAMES.iter().all(|n| !f.matches(n, &[1])));
        assert!(matches!(
            TensorFilter::from_patterns(&["[abc"], &[]),
            Err(Error::Pattern { .. })
        ));
    }
}
