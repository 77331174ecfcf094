//! Packed binary pruning masks.
//!
//! A set bit means the weight is kept. Bits are stored LSB-first in row-major
//! element order, so [`TensorMask::to_packed_bytes`] is the canonical
//! serialized form.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::CoreError;

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMask {
    shape: Vec<usize>,
    len: usize,
    words: Vec<u64>,
    nnz: u64,
}

impl TensorMask {
    pub fn ones(shape: &[usize]) -> Self {
        let len: usize = shape.iter().product();
        let mut words = vec![u64::MAX; len.div_ceil(WORD)];
        if len % WORD != 0 {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % WORD)) - 1;
            }
        }
        TensorMask {
            shape: shape.to_vec(),
            len,
            words,
            nnz: len as u64,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len: usize = shape.iter().product();
        TensorMask {
            shape: shape.to_vec(),
            len,
            words: vec![0; len.div_ceil(WORD)],
            nnz: 0,
        }
    }

    /// Builds a mask where `keep(i)` decides flat element `i`.
    pub fn from_fn(shape: &[usize], mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut mask = Self::zeros(shape);
        let mut nnz = 0u64;
        for i in 0..mask.len {
            if keep(i) {
                mask.words[i / WORD] |= 1u64 << (i % WORD);
                nnz += 1;
            }
        }
        mask.nnz = nnz;
        mask
    }

    pub fn from_bools(shape: &[usize], bits: &[bool]) -> Result<Self, CoreError> {
        let len: usize = shape.iter().product();
        if bits.len() != len {
            return Err(CoreError::MaskLength {
                expected: len,
                actual: bits.len(),
            });
        }
        Ok(Self::from_fn(shape, |i| bits[i]))
    }

    /// Decodes `ceil(numel / 8)` LSB-first bytes. Padding bits must be zero.
    pub fn from_packed_bytes(shape: &[usize], bytes: &[u8]) -> Result<Self, CoreError> {
        let len: usize = shape.iter().product();
        if bytes.len() != len.div_ceil(8) {
            return Err(CoreError::MaskLength {
                expected: len,
                actual: bytes.len() * 8,
            });
        }
        if len % 8 != 0 && bytes[bytes.len() - 1] >> (len % 8) != 0 {
            return Err(CoreError::MaskLength {
                expected: len,
                actual: bytes.len() * 8,
            });
        }
        let mut words = vec![0u64; len.div_ceil(WORD)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(b);
        }
        let nnz = words.iter().map(|w| w.count_ones() as u64).sum();
        Ok(TensorMask {
            shape: shape.to_vec(),
            len,
            words,
            nnz,
        })
    }

    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of elements covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Cached count of kept weights.
    pub fn nnz(&self) -> u64 {
        self.nnz
    }

    pub fn pruned(&self) -> u64 {
        self.len as u64 - self.nnz
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    /// Recounts set bits and compares against the cached value.
    pub fn verify(&self) -> Result<(), CoreError> {
        let counted: u64 = self.words.iter().map(|w| w.count_ones() as u64).sum();
        if counted != self.nnz {
            return Err(CoreError::NnzMismatch {
                cached: self.nnz,
                counted,
            });
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    fn check_compatible(&self, other: &TensorMask, name: &str) -> Result<(), CoreError> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                tensor: name.into(),
            });
        }
        Ok(())
    }

    fn intersection(&self, other: &TensorMask) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    fn subset_of(&self, other: &TensorMask) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// `|a ∧ b| / sqrt(nnz(a) · nnz(b))`.
    pub fn cosine_similarity(&self, other: &TensorMask) -> Result<f64, CoreError> {
        self.check_compatible(other, "")?;
        cosine(self.intersection(other), self.nnz, other.nnz)
    }

    /// True when every kept bit of `self` is also kept in `other`.
    pub fn is_subset_of(&self, other: &TensorMask) -> Result<bool, CoreError> {
        self.check_compatible(other, "")?;
        Ok(self.subset_of(other))
    }

    /// Zeroes the bytes of every pruned element of a raw payload in place.
    pub fn zero_pruned(&self, payload: &mut [u8], byte_width: usize) -> Result<(), CoreError> {
        if payload.len() != self.len * byte_width {
            return Err(CoreError::MaskLength {
                expected: payload.len() / byte_width.max(1),
                actual: self.len,
            });
        }
        for (i, elem) in payload.chunks_exact_mut(byte_width).enumerate() {
            if !self.get(i) {
                elem.fill(0);
            }
        }
        Ok(())
    }
}

fn cosine(intersection: u64, nnz_a: u64, nnz_b: u64) -> Result<f64, CoreError> {
    if nnz_a == 0 || nnz_b == 0 {
        return Err(CoreError::AllZeroMask);
    }
    if nnz_a == nnz_b && intersection == nnz_a {
        return Ok(1.0);
    }
    Ok(intersection as f64 / libm::sqrt(nnz_a as f64 * nnz_b as f64))
}

/// Tensor-selection rule recorded alongside a mask.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterSpec {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    /// Tensors with fewer dimensions are never prunable.
    pub min_rank: usize,
}

impl FilterSpec {
    /// Matrices named like weights, minus embeddings, norms and biases.
    pub fn default_prunable() -> Self {
        FilterSpec {
            include: vec!["*weight*".into()],
            exclude: vec!["*embed*".into(), "*norm*".into(), "*bias*".into()],
            min_rank: 2,
        }
    }
}

/// How a mask set was produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub method: String,
    pub target_sparsity: f64,
    /// Hex content hash of the source container, empty when unknown.
    pub source_digest: String,
    pub prunable_filter: FilterSpec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskSet {
    pub masks: BTreeMap<String, TensorMask>,
    pub provenance: Provenance,
}

impl MaskSet {
    pub fn new(provenance: Provenance) -> Self {
        MaskSet {
            masks: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, mask: TensorMask) {
        self.masks.insert(name.into(), mask);
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TensorMask> {
        self.masks.get(name)
    }

    pub fn numel(&self) -> u64 {
        self.masks.values().map(|m| m.len() as u64).sum()
    }

    pub fn nnz(&self) -> u64 {
        self.masks.values().map(TensorMask::nnz).sum()
    }

    /// `1 - kept / total` over the tensors present in the set.
    pub fn sparsity(&self) -> Result<f64, CoreError> {
        if self.masks.is_empty() {
            return Err(CoreError::EmptySet);
        }
        let total = self.numel();
        if total == 0 {
            return Err(CoreError::EmptySet);
        }
        Ok((total - self.nnz()) as f64 / total as f64)
    }

    pub fn verify(&self) -> Result<(), CoreError> {
        self.masks.values().try_for_each(TensorMask::verify)
    }

    fn check_compatible(&self, other: &MaskSet) -> Result<(), CoreError> {
        for name in self.masks.keys() {
            if !other.masks.contains_key(name) {
                return Err(CoreError::NameMismatch(name.clone()));
            }
        }
        for (name, mask) in &other.masks {
            match self.masks.get(name) {
                None => return Err(CoreError::NameMismatch(name.clone())),
                Some(m) => m.check_compatible(mask, name)?,
            }
        }
        Ok(())
    }

    /// Cosine similarity of the concatenated flat masks.
    pub fn cosine_similarity(&self, other: &MaskSet) -> Result<f64, CoreError> {
        self.check_compatible(other)?;
        let intersection = self
            .masks
            .iter()
            .map(|(name, m)| m.intersection(&other.masks[name]))
            .sum();
        cosine(intersection, self.nnz(), other.nnz())
    }

    /// Per-tensor cosine similarity; `None` where either mask is all-zero.
    pub fn per_tensor_cosine(
        &self,
        other: &MaskSet,
    ) -> Result<BTreeMap<String, Option<f64>>, CoreError> {
        self.check_compatible(other)?;
        Ok(self
            .masks
            .iter()
            .map(|(name, m)| (name.clone(), m.cosine_similarity(&other.masks[name]).ok()))
            .collect())
    }

    /// `self ⊆ other`: every weight kept by `self` is kept by `other`.
    pub fn is_nested_in(&self, other: &MaskSet) -> Result<bool, CoreError> {
        self.check_compatible(other)?;
        Ok(self
            .masks
            .iter()
            .all(|(name, m)| m.subset_of(&other.masks[name])))
    }
}

/// True iff the higher-sparsity set keeps only weights the lower one keeps.
pub fn is_nested(high: &MaskSet, low: &MaskSet) -> Result<bool, CoreError> {
    high.is_nested_in(low)
}

/// Pairwise whole-model cosine similarities. Diagonal is exactly 1.
pub fn similarity_matrix(sets: &[MaskSet]) -> Result<Vec<Vec<f64>>, CoreError> {
    if sets.len() < 2 {
        return Err(CoreError::TooFewSets);
    }
    let n = sets.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        sets[i].check_compatible(&sets[i])?;
        if sets[i].nnz() == 0 {
            return Err(CoreError::AllZeroMask);
        }
        out[i][i] = 1.0;
        for j in i + 1..n {
            let c = sets[i].cosine_similarity(&sets[j])?;
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    Ok(out)
}
