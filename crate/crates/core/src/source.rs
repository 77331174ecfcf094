//! Where weights come from.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::CoreError;

/// Name and shape of one tensor taking part in an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<usize>>) -> Self {
        TensorInfo {
            name: name.into(),
            shape: shape.into(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Random access to widened tensor values by name.
///
/// Implementations must reject non-finite payloads with
/// [`CoreError::NonFiniteWeight`] (converted into `Self::Error`).
pub trait WeightSource: Sync {
    type Error: From<CoreError> + Send;

    fn load(&self, name: &str) -> Result<Vec<f64>, Self::Error>;
}

/// Checks names are unique, sorts by name and validates shapes.
pub(crate) fn normalize_infos(infos: &[TensorInfo]) -> Result<Vec<TensorInfo>, CoreError> {
    let mut sorted = infos.to_vec();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for w in sorted.windows(2) {
        if w[0].name == w[1].name {
            return Err(CoreError::DuplicateTensor(w[0].name.clone()));
        }
    }
    for info in &sorted {
        if info.shape.contains(&0) {
            return Err(CoreError::InvalidShape {
                tensor: info.name.clone(),
            });
        }
    }
    Ok(sorted)
}

/// Loads and checks a tensor against its declared shape.
pub(crate) fn load_checked<S: WeightSource>(
    source: &S,
    info: &TensorInfo,
) -> Result<Vec<f64>, S::Error> {
    let values = source.load(&info.name)?;
    if values.len() != info.numel() {
        return Err(CoreError::ValueCount {
            tensor: info.name.clone(),
            expected: info.numel(),
            actual: values.len(),
        }
        .into());
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::NonFiniteWeight {
            tensor: info.name.clone(),
            index,
        }
        .into());
    }
    Ok(values)
}

/// Tensors held in memory, mostly for tests and small fixtures.
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl InMemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.tensors.insert(name.into(), (shape, values));
    }

    pub fn with(mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        self.insert(name, shape, values);
        self
    }

    pub fn infos(&self) -> Vec<TensorInfo> {
        self.tensors
            .iter()
            .map(|(n, (s, _))| TensorInfo::new(n.clone(), s.clone()))
            .collect()
    }
}

impl WeightSource for InMemorySource {
    type Error = CoreError;

    fn load(&self, name: &str) -> Result<Vec<f64>, CoreError> {
        self.tensors
            .get(name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| CoreError::NameMismatch(name.into()))
    }
}
