//! Stored element precisions and their lossless widening to `f64`.

use core::fmt;
use core::str::FromStr;

use half::{bf16, f16};

/// Floating-point storage type of a tensor payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    F16,
    BF16,
    F32,
    F64,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::F16, DType::BF16, DType::F32, DType::F64];

    pub const fn byte_width(self) -> usize {
        match self {
            DType::F16 | DType::BF16 => 2,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub const fn tag(self) -> &'static str {
        match self {
            DType::F16 => "F16",
            DType::BF16 => "BF16",
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    /// Decodes one little-endian element. `bytes` must be exactly `byte_width` long.
    #[inline]
    pub fn decode(self, bytes: &[u8]) -> f64 {
        match self {
            DType::F16 => f16::from_le_bytes([bytes[0], bytes[1]]).to_f64(),
            DType::BF16 => bf16::from_le_bytes([bytes[0], bytes[1]]).to_f64(),
            DType::F32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            DType::F64 => {
                let mut b = [0u8; 8];
                b.copy_from_slice(bytes);
                f64::from_le_bytes(b)
            }
        }
    }

    /// Encodes one value, rounding to nearest when the precision is narrower.
    #[inline]
    pub fn encode(self, value: f64, out: &mut [u8]) {
        match self {
            DType::F16 => out.copy_from_slice(&f16::from_f64(value).to_le_bytes()),
            DType::BF16 => out.copy_from_slice(&bf16::from_f64(value).to_le_bytes()),
            DType::F32 => out.copy_from_slice(&(value as f32).to_le_bytes()),
            DType::F64 => out.copy_from_slice(&value.to_le_bytes()),
        }
    }

    /// Decodes a whole payload in row-major order.
    pub fn decode_all(self, bytes: &[u8], out: &mut alloc::vec::Vec<f64>) {
        out.reserve(bytes.len() / self.byte_width());
        out.extend(
            bytes
                .chunks_exact(self.byte_width())
                .map(|c| self.decode(c)),
        );
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F16" => Ok(DType::F16),
            "BF16" => Ok(DType::BF16),
            "F32" => Ok(DType::F32),
            "F64" => Ok(DType::F64),
            _ => Err(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn widths() {
        assert_eq!(DType::F16.byte_width(), 2);
        assert_eq!(DType::BF16.byte_width(), 2);
        assert_eq!(DType::F32.byte_width(), 4);
        assert_eq!(DType::F64.byte_width(), 8);
    }

    #[test]
    fn decodes_one() {
        assert_eq!(DType::F32.decode(&[0x00, 0x00, 0x80, 0x3F]), 1.0);
        assert_eq!(DType::F16.decode(&[0x00, 0x3C]), 1.0);
        assert_eq!(DType::BF16.decode(&[0x80, 0x3F]), 1.0);
    }

    #[test]
    fn tags_parse() {
        for d in DType::ALL {
            assert_eq!(d.tag().parse::<DType>(), Ok(d));
        }
        assert!("I8".parse::<DType>().is_err());
    }

    proptest! {
        #[test]
        fn f32_widening_is_exact(bits in any::<u32>()) {
            let x = f32::from_bits(bits);
            prop_assume!(x.is_finite());
            let mut buf = [0u8; 4];
            DType::F32.encode(x as f64, &mut buf);
            prop_assert_eq!(DType::F32.decode(&buf).to_bits(), (x as f64).to_bits());
        }

        #[test]
        fn half_round_trips(bits in any::<u16>()) {
            for d in [DType::F16, DType::BF16] {
                let raw = bits.to_le_bytes();
                let v = d.decode(&raw);
                prop_assume!(v.is_finite());
                let mut buf = [0u8; 2];
                d.encode(v, &mut buf);
                prop_assert_eq!(buf, raw);
            }
        }
    }
}
