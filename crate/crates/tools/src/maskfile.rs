//! Binary mask files.
//!
//! ```text
//! "ESMK"        magic
//! u32 LE        version (1)
//! u64 LE        JSON header length H
//! H bytes       {name: {"shape", "nnz", "bit_offset"}, "provenance": {..}}
//! bitstream     per tensor in name order, LSB-first, padded to a whole byte
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sparsity_core::{FilterSpec, MaskSet, Provenance, TensorMask};

use crate::error::{Error, MaskFileError, Result};

pub const MAGIC: &[u8; 4] = b"ESMK";
pub const VERSION: u32 = 1;
const PROVENANCE_KEY: &str = "provenance";
const PREAMBLE: usize = 16;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterJson {
    include: Vec<String>,
    exclude: Vec<String>,
    min_rank: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceJson {
    method: String,
    target_sparsity: f64,
    source_digest: String,
    prunable_filter: FilterJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryJson {
    shape: Vec<usize>,
    nnz: u64,
    bit_offset: u64,
}

impl From<&Provenance> for ProvenanceJson {
    fn from(p: &Provenance) -> Self {
        ProvenanceJson {
            method: p.method.clone(),
            target_sparsity: p.target_sparsity,
            source_digest: p.source_digest.clone(),
            prunable_filter: FilterJson {
                include: p.prunable_filter.include.clone(),
                exclude: p.prunable_filter.exclude.clone(),
                min_rank: p.prunable_filter.min_rank,
            },
        }
    }
}

impl From<ProvenanceJson> for Provenance {
    fn from(p: ProvenanceJson) -> Self {
        Provenance {
            method: p.method,
            target_sparsity: p.target_sparsity,
            source_digest: p.source_digest,
            prunable_filter: FilterSpec {
                include: p.prunable_filter.include,
                exclude: p.prunable_filter.exclude,
                min_rank: p.prunable_filter.min_rank,
            },
        }
    }
}

fn invalid(reason: impl std::fmt::Display) -> MaskFileError {
    MaskFileError::InvalidHeader(reason.to_string())
}

pub fn encode_mask(set: &MaskSet) -> Result<Vec<u8>> {
    let mut header = Map::new();
    let mut bit_offset = 0u64;
    for (name, mask) in &set.masks {
        if name == PROVENANCE_KEY {
            return Err(MaskFileError::ReservedName(name.clone()).into());
        }
        let entry = EntryJson {
            shape: mask.shape().to_vec(),
            nnz: mask.nnz(),
            bit_offset,
        };
        header.insert(name.clone(), serde_json::to_value(entry)?);
        bit_offset += mask.len().div_ceil(8) as u64 * 8;
    }
    header.insert(
        PROVENANCE_KEY.into(),
        serde_json::to_value(ProvenanceJson::from(&set.provenance))?,
    );
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + (bit_offset / 8) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for mask in set.masks.values() {
        out.extend_from_slice(&mask.to_packed_bytes());
    }
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<MaskSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(MaskFileError::BadMagic.into());
    }
    if bytes.len() < PREAMBLE {
        return Err(MaskFileError::HeaderLength {
            declared: 8,
            available: bytes.len().saturating_sub(8) as u64,
        }
        .into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(MaskFileError::UnsupportedVersion(version).into());
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let available = (bytes.len() - PREAMBLE) as u64;
    if header_len > available {
        return Err(MaskFileError::HeaderLength {
            declared: header_len,
            available,
        }
        .into());
    }
    let header_end = PREAMBLE + header_len as usize;
    let mut root: Map<String, Value> =
        serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(invalid)?;
    let provenance: ProvenanceJson = serde_json::from_value(
        root.remove(PROVENANCE_KEY)
            .ok_or_else(|| invalid("missing provenance"))?,
    )
    .map_err(|e| invalid(format!("provenance: {e}")))?;

    let stream = &bytes[header_end..];

    // Check the whole layout against the stream before decoding any bits.
    let mut layout = Vec::with_capacity(root.len());
    let mut expected_offset = 0u64;
    for (name, value) in root {
        let entry: EntryJson =
            serde_json::from_value(value).map_err(|e| invalid(format!("tensor '{name}': {e}")))?;
        let bit_err = |reason: String| MaskFileError::BitLength {
            tensor: name.clone(),
            reason,
        };
        if entry.shape.contains(&0) {
            return Err(bit_err("shape has a zero dimension".into()).into());
        }
        if entry.bit_offset != expected_offset {
            return Err(bit_err(format!(
                "bit_offset {} but previous tensors end at {expected_offset}",
                entry.bit_offset
            ))
            .into());
        }
        let len = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bit_err("shape overflows".into()))?;
        let nbytes = len.div_ceil(8) as u64;
        expected_offset += nbytes * 8;
        layout.push((name, entry, nbytes as usize));
    }
    let used = expected_offset / 8;
    if stream.len() as u64 != used {
        return Err(MaskFileError::BitLength {
            tensor: layout.last().map(|(n, _, _)| n.clone()).unwrap_or_default(),
            reason: format!("stream has {} bytes, header describes {used}", stream.len()),
        }
        .into());
    }

    let mut set = MaskSet::new(provenance.into());
    for (name, entry, nbytes) in layout {
        let start = (entry.bit_offset / 8) as usize;
        let mask = TensorMask::from_packed_bytes(&entry.shape, &stream[start..start + nbytes])
            .map_err(|e| MaskFileError::BitLength {
                tensor: name.clone(),
                reason: e.to_string(),
            })?;
        if mask.nnz() != entry.nnz {
            return Err(MaskFileError::NnzMismatch {
                tensor: name,
                header: entry.nnz,
                counted: mask.nnz(),
            }
            .into());
        }
        set.insert(name, mask);
    }
    Ok(set)
}

pub fn write_mask(path: impl AsRef<Path>, set: &MaskSet) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_mask(set)?;
    let file = File::create(path).map_err(Error::file(path))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes).map_err(Error::file(path))?;
    out.flush().map_err(Error::file(path))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskSet> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(Error::file(path))?;
    decode_mask(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MaskSet {
        let mut set = MaskSet::new(Provenance {
            method: "omp-global".into(),
            target_sparsity: 0.3,
            source_digest: "ab".repeat(32),
            prunable_filter: FilterSpec::default_prunable(),
        });
        set.insert("b", TensorMask::from_fn(&[3, 5], |i| i % 3 != 0));
        set.insert("a", TensorMask::from_bools(&[2], &[true, false]).unwrap());
        set.insert("c", TensorMask::ones(&[]));
        set
    }

    #[test]
    fn round_trip() {
        let set = sample();
        let bytes = encode_mask(&set).unwrap();
        let back = decode_mask(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(encode_mask(&back).unwrap(), bytes);
        assert_eq!(&bytes[..4], b"ESMK");
    }

    #[test]
    fn header_lists_offsets() {
        let bytes = encode_mask(&sample()).unwrap();
        let h = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let v: Value = serde_json::from_slice(&bytes[16..16 + h]).unwrap();
        assert_eq!(v["a"]["bit_offset"], 0);
        assert_eq!(v["b"]["bit_offset"], 8);
        assert_eq!(v["c"]["bit_offset"], 24);
        assert_eq!(v["b"]["nnz"], 10);
        assert_eq!(v["provenance"]["prunable_filter"]["min_rank"], 2);
        assert_eq!(bytes.len(), 16 + h + 4);
        // a = [1, 0] -> 0b01
        assert_eq!(bytes[16 + h], 0b01);
    }

    fn header_of(bytes: &[u8]) -> (usize, Value) {
        let h = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        (h, serde_json::from_slice(&bytes[16..16 + h]).unwrap())
    }

    fn rebuild(v: &Value, stream: &[u8]) -> Vec<u8> {
        let header = serde_json::to_vec(v).unwrap();
        let mut out = b"ESMK".to_vec();
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(stream);
        out
    }

    #[test]
    fn malformed_files() {
        let good = encode_mask(&sample()).unwrap();
        let (h, header) = header_of(&good);
        let stream = good[16 + h..].to_vec();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_mask(&bad),
            Err(Error::MaskFile(MaskFileError::BadMagic))
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_mask(&bad),
            Err(Error::MaskFile(MaskFileError::UnsupportedVersion(2)))
        ));

        let mut v = header.clone();
        v["b"]["nnz"] = 11.into();
        assert!(matches!(
            decode_mask(&rebuild(&v, &stream)),
            Err(Error::MaskFile(MaskFileError::NnzMismatch {
                header: 11,
                counted: 10,
                ..
            }))
        ));

        let mut v = header.clone();
        v["b"]["shape"] = serde_json::json!([4, 5]);
        assert!(matches!(
            decode_mask(&rebuild(&v, &stream)),
            Err(Error::MaskFile(MaskFileError::BitLength { .. }))
        ));

        assert!(matches!(
            decode_mask(&rebuild(&header, &stream[..stream.len() - 1])),
            Err(Error::MaskFile(MaskFileError::BitLength { .. }))
        ));
        let mut longer = stream.clone();
        longer.push(0);
        assert!(matches!(
            decode_mask(&rebuild(&header, &longer)),
            Err(Error::MaskFile(MaskFileError::BitLength { .. }))
        ));

        // set a padding bit in tensor "a" (2 live bits)
        let mut dirty = stream.clone();
        dirty[0] |= 0b100;
        assert!(matches!(
            decode_mask(&rebuild(&header, &dirty)),
            Err(Error::MaskFile(MaskFileError::BitLength { .. }))
        ));

        let mut v = header.clone();
        v.as_object_mut().unwrap().remove("provenance");
        assert!(matches!(
            decode_mask(&rebuild(&v, &stream)),
            Err(Error::MaskFile(MaskFileError::InvalidHeader(_)))
        ));

        let mut truncated = good[..20].to_vec();
        truncated[8..16].copy_from_slice(&1000u64.to_le_bytes());
        assert!(matches!(
            decode_mask(&truncated),
            Err(Error::MaskFile(MaskFileError::HeaderLength { .. }))
        ));
    }

    #[test]
    fn reserved_name() {
        let mut set = sample();
        set.insert("provenance", TensorMask::ones(&[1]));
        assert!(matches!(
            encode_mask(&set),
            Err(Error::MaskFile(MaskFileError::ReservedName(_)))
        ));
    }
}
