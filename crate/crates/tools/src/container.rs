//! Tensor container files.
//!
//! Layout (safetensors-compatible):
//!
//! ```text
//! [0..8)        u64 LE header length H
//! [8..8+H)      UTF-8 JSON: {name: {"dtype", "shape", "data_offsets": [begin, end]}, "__metadata__"?: {..}}
//! [8+H..)       row-major little-endian tensor payloads, offsets relative to 8+H
//! ```
//!
//! Opening a container parses only the header. Payloads are read on demand
//! through a [`ByteSource`], one tensor at a time.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use sparsity_core::{CoreError, DType, TensorInfo, WeightSource};

use crate::error::{Error, FormatError, Result};
use crate::filter::TensorFilter;

const METADATA_KEY: &str = "__metadata__";
/// Refuse headers larger than this before allocating for them.
const MAX_HEADER: u64 = 256 << 20;

/// Positioned reads over an immutable byte store.
pub trait ByteSource: Send + Sync {
    fn len(&self) -> u64;

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ByteSource for Vec<u8> {
    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let start = usize::try_from(offset).map_err(|_| io::ErrorKind::UnexpectedEof)?;
        let end = start
            .checked_add(buf.len())
            .filter(|&e| e <= self.as_slice().len())
            .ok_or(io::ErrorKind::UnexpectedEof)?;
        buf.copy_from_slice(&self[start..end]);
        Ok(())
    }
}

pub struct FileSource {
    file: File,
    len: u64,
}

impl FileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(Error::file(path))?;
        let len = file.metadata().map_err(Error::file(path))?.len();
        Ok(FileSource { file, len })
    }
}

impl ByteSource for FileSource {
    fn len(&self) -> u64 {
        self.len
    }

    #[cfg(unix)]
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        std::os::unix::fs::FileExt::read_exact_at(&self.file, buf, offset)
    }

    #[cfg(windows)]
    fn read_at(&self, mut offset: u64, mut buf: &mut [u8]) -> io::Result<()> {
        use std::os::windows::fs::FileExt;
        while !buf.is_empty() {
            match self.file.seek_read(buf, offset)? {
                0 => return Err(io::ErrorKind::UnexpectedEof.into()),
                n => {
                    buf = &mut buf[n..];
                    offset += n as u64;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Offsets relative to the start of the data section.
    pub byte_range: Range<u64>,
}

impl TensorMeta {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn info(&self) -> TensorInfo {
        TensorInfo::new(self.name.clone(), self.shape.clone())
    }
}

pub struct Container {
    metas: BTreeMap<String, TensorMeta>,
    metadata: Option<BTreeMap<String, String>>,
    data_start: u64,
    source: Box<dyn ByteSource>,
}

impl std::fmt::Debug for Container {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Container")
            .field("metas", &self.metas)
            .field("metadata", &self.metadata)
            .finish_non_exhaustive()
    }
}

impl Container {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_source(Box::new(FileSource::open(path.as_ref())?))
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        Self::from_source(Box::new(bytes))
    }

    pub fn from_source(source: Box<dyn ByteSource>) -> Result<Self> {
        let available = source.len();
        if available < 8 {
            return Err(FormatError::HeaderLength {
                declared: 8,
                available,
            }
            .into());
        }
        let mut len_buf = [0u8; 8];
        source.read_at(0, &mut len_buf)?;
        let header_len = u64::from_le_bytes(len_buf);
        if header_len > MAX_HEADER || header_len > available - 8 {
            return Err(FormatError::HeaderLength {
                declared: header_len,
                available: available - 8,
            }
            .into());
        }
        let mut header = vec![0u8; header_len as usize];
        source.read_at(8, &mut header)?;
        let data_start = 8 + header_len;
        let (metas, metadata) = parse_header(&header, available - data_start)?;
        Ok(Container {
            metas,
            metadata,
            data_start,
            source,
        })
    }

    pub fn metas(&self) -> impl Iterator<Item = &TensorMeta> {
        self.metas.values()
    }

    pub fn meta(&self, name: &str) -> Result<&TensorMeta> {
        self.metas
            .get(name)
            .ok_or_else(|| Error::UnknownTensor(name.into()))
    }

    pub fn metadata(&self) -> Option<&BTreeMap<String, String>> {
        self.metadata.as_ref()
    }

    pub fn len(&self) -> usize {
        self.metas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metas.is_empty()
    }

    pub fn total_params(&self) -> u64 {
        self.metas.values().map(|m| m.numel() as u64).sum()
    }

    /// Raw little-endian payload of one tensor.
    pub fn read_raw(&self, name: &str) -> Result<Vec<u8>> {
        let meta = self.meta(name)?;
        let mut buf = vec![0u8; (meta.byte_range.end - meta.byte_range.start) as usize];
        self.source
            .read_at(self.data_start + meta.byte_range.start, &mut buf)?;
        Ok(buf)
    }

    /// Values widened to `f64` in row-major order. Non-finite payloads are rejected.
    pub fn read_values(&self, name: &str) -> Result<Vec<f64>> {
        let meta = self.meta(name)?;
        let raw = self.read_raw(name)?;
        let mut values = Vec::new();
        meta.dtype.decode_all(&raw, &mut values);
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteWeight {
                tensor: name.into(),
                index,
            }
            .into());
        }
        Ok(values)
    }

    /// Metas matching `filter`, sorted by name.
    pub fn list_tensors(&self, filter: &TensorFilter) -> Vec<&TensorMeta> {
        self.metas
            .values()
            .filter(|m| filter.matches(&m.name, &m.shape))
            .collect()
    }

    pub fn infos(&self, filter: &TensorFilter) -> Vec<TensorInfo> {
        self.list_tensors(filter)
            .into_iter()
            .map(TensorMeta::info)
            .collect()
    }

    /// Hex SHA-256 of the complete container bytes.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 20];
        let mut offset = 0;
        let len = self.source.len();
        while offset < len {
            let n = (len - offset).min(buf.len() as u64) as usize;
            self.source.read_at(offset, &mut buf[..n])?;
            hasher.update(&buf[..n]);
            offset += n as u64;
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

impl WeightSource for Container {
    type Error = Error;

    fn load(&self, name: &str) -> Result<Vec<f64>> {
        self.read_values(name)
    }
}

fn entry_err(tensor: &str, reason: impl Into<String>) -> FormatError {
    FormatError::InvalidEntry {
        tensor: tensor.into(),
        reason: reason.into(),
    }
}

type ParsedHeader = (
    BTreeMap<String, TensorMeta>,
    Option<BTreeMap<String, String>>,
);

fn parse_header(header: &[u8], data_len: u64) -> Result<ParsedHeader, FormatError> {
    let text = std::str::from_utf8(header).map_err(|_| FormatError::InvalidUtf8)?;
    let root: Map<String, Value> =
        serde_json::from_str(text).map_err(|e| FormatError::InvalidJson(e.to_string()))?;

    let mut metas = BTreeMap::new();
    let mut metadata = None;
    for (name, value) in root {
        if name == METADATA_KEY {
            let md: BTreeMap<String, String> =
                serde_json::from_value(value).map_err(|_| FormatError::InvalidMetadata)?;
            metadata = Some(md);
            continue;
        }
        let meta = parse_entry(&name, &value)?;
        metas.insert(name, meta);
    }

    let mut by_offset: Vec<&TensorMeta> = metas.values().collect();
    by_offset.sort_by_key(|m| (m.byte_range.start, m.byte_range.end));
    let mut cursor = 0u64;
    let mut prev: Option<&TensorMeta> = None;
    for m in &by_offset {
        if let Some(p) = prev {
            if m.byte_range.start < p.byte_range.end {
                return Err(FormatError::OverlappingRanges {
                    first: p.name.clone(),
                    second: m.name.clone(),
                });
            }
        }
        if m.byte_range.start != cursor {
            return Err(FormatError::NonContiguous {
                tensor: m.name.clone(),
            });
        }
        if m.byte_range.end > data_len {
            return Err(FormatError::OutOfBounds {
                tensor: m.name.clone(),
            });
        }
        cursor = m.byte_range.end;
        prev = Some(m);
    }
    if cursor != data_len {
        return Err(FormatError::TrailingBytes(data_len - cursor));
    }
    Ok((metas, metadata))
}

fn parse_entry(name: &str, value: &Value) -> Result<TensorMeta, FormatError> {
    if name.is_empty() {
        return Err(entry_err(name, "empty tensor name"));
    }
    let obj = value
        .as_object()
        .ok_or_else(|| entry_err(name, "expected an object"))?;
    let dtype_tag = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| entry_err(name, "missing dtype"))?;
    let dtype: DType = dtype_tag.parse().map_err(|_| FormatError::UnknownDtype {
        tensor: name.into(),
        dtype: dtype_tag.into(),
    })?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| entry_err(name, "missing shape"))?
        .iter()
        .map(|d| d.as_u64().and_then(|d| usize::try_from(d).ok()))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| entry_err(name, "shape must be non-negative integers"))?;
    if shape.contains(&0) {
        return Err(FormatError::InvalidShape {
            tensor: name.into(),
        });
    }
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .and_then(|a| Some([a[0].as_u64()?, a[1].as_u64()?]))
        .ok_or_else(|| entry_err(name, "data_offsets must be two integers"))?;
    if offsets[0] > offsets[1] {
        return Err(entry_err(name, "data_offsets begin exceeds end"));
    }
    let expected = shape
        .iter()
        .try_fold(dtype.byte_width() as u64, |acc, &d| {
            acc.checked_mul(d as u64)
        })
        .ok_or_else(|| entry_err(name, "shape overflows"))?;
    let actual = offsets[1] - offsets[0];
    if expected != actual {
        return Err(FormatError::SizeMismatch {
            tensor: name.into(),
            expected,
            actual,
        });
    }
    Ok(TensorMeta {
        name: name.into(),
        dtype,
        shape,
        byte_range: offsets[0]..offsets[1],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Values(Vec<f64>),
    /// Little-endian bytes already in the entry's dtype.
    Raw(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl TensorEntry {
    pub fn values(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        TensorEntry {
            name: name.into(),
            dtype,
            shape,
            payload: Payload::Values(values),
        }
    }

    fn encoded(self) -> Result<Vec<u8>> {
        let numel: usize = self.shape.iter().product();
        let width = self.dtype.byte_width();
        match self.payload {
            Payload::Values(values) => {
                if values.len() != numel {
                    return Err(CoreError::ValueCount {
                        tensor: self.name,
                        expected: numel,
                        actual: values.len(),
                    }
                    .into());
                }
                let mut out = vec![0u8; numel * width];
                for (chunk, v) in out.chunks_exact_mut(width).zip(values) {
                    self.dtype.encode(v, chunk);
                }
                Ok(out)
            }
            Payload::Raw(bytes) => {
                if bytes.len() != numel * width {
                    return Err(CoreError::ValueCount {
                        tensor: self.name,
                        expected: numel * width,
                        actual: bytes.len(),
                    }
                    .into());
                }
                Ok(bytes)
            }
        }
    }
}

/// Declared layout of a tensor to be written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLayout {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

/// Writes a container whose payloads are produced on demand by `fill`, in
/// name order, so only one tensor is held at a time.
pub fn write_container_streaming<W, F>(
    out: &mut W,
    layouts: &[TensorLayout],
    metadata: Option<&BTreeMap<String, String>>,
    mut fill: F,
) -> Result<()>
where
    W: Write,
    F: FnMut(&TensorLayout) -> Result<Vec<u8>>,
{
    let mut sorted: Vec<&TensorLayout> = layouts.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut header = Map::new();
    if let Some(md) = metadata {
        header.insert(METADATA_KEY.into(), json!(md));
    }
    let mut offset = 0u64;
    for l in &sorted {
        if l.name == METADATA_KEY || l.name.is_empty() {
            return Err(FormatError::ReservedName(l.name.clone()).into());
        }
        if l.shape.contains(&0) {
            return Err(FormatError::InvalidShape {
                tensor: l.name.clone(),
            }
            .into());
        }
        let size = (l.shape.iter().product::<usize>() * l.dtype.byte_width()) as u64;
        let entry = json!({
            "dtype": l.dtype.tag(),
            "shape": l.shape,
            "data_offsets": [offset, offset + size],
        });
        if header.insert(l.name.clone(), entry).is_some() {
            return Err(CoreError::DuplicateTensor(l.name.clone()).into());
        }
        offset += size;
    }
    let mut header_bytes = serde_json::to_vec(&header)?;
    // pad to 8-byte alignment like other safetensors writers
    header_bytes.resize(header_bytes.len().next_multiple_of(8), b' ');
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for l in sorted {
        let bytes = fill(l)?;
        let size = l.shape.iter().product::<usize>() * l.dtype.byte_width();
        if bytes.len() != size {
            return Err(CoreError::ValueCount {
                tensor: l.name.clone(),
                expected: size,
                actual: bytes.len(),
            }
            .into());
        }
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_container_to<W: Write>(
    out: &mut W,
    entries: Vec<TensorEntry>,
    metadata: Option<&BTreeMap<String, String>>,
) -> Result<()> {
    let layouts: Vec<TensorLayout> = entries
        .iter()
        .map(|e| TensorLayout {
            name: e.name.clone(),
            dtype: e.dtype,
            shape: e.shape.clone(),
        })
        .collect();
    let mut by_name: BTreeMap<String, TensorEntry> = BTreeMap::new();
    for e in entries {
        let name = e.name.clone();
        if by_name.insert(name.clone(), e).is_some() {
            return Err(CoreError::DuplicateTensor(name).into());
        }
    }
    write_container_streaming(out, &layouts, metadata, |l| {
        by_name
            .remove(&l.name)
            .ok_or_else(|| Error::UnknownTensor(l.name.clone()))?
            .encoded()
    })
}

pub fn encode_container(
    entries: Vec<TensorEntry>,
    metadata: Option<&BTreeMap<String, String>>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_container_to(&mut out, entries, metadata)?;
    Ok(out)
}

pub fn write_container(
    path: impl AsRef<Path>,
    entries: Vec<TensorEntry>,
    metadata: Option<&BTreeMap<String, String>>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(Error::file(path))?;
    let mut out = BufWriter::new(file);
    write_container_to(&mut out, entries, metadata)
}
