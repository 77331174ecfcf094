//! Seeded synthetic containers for tests and demos.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use sparsity_core::DType;

use crate::container::{write_container_streaming, TensorLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Standard normal.
    Normal,
    /// Uniform on `[-1, 1)`.
    Uniform,
    /// Exactly zero with probability `p`, otherwise standard normal.
    SpikeAtZero(f64),
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Distribution::Normal),
            "uniform" => Ok(Distribution::Uniform),
            _ => {
                let p = s
                    .strip_prefix("spike:")
                    .ok_or_else(|| {
                        Error::Synth(format!(
                            "unknown distribution '{s}' (expected normal, uniform or spike:<p>)"
                        ))
                    })?
                    .parse::<f64>()
                    .map_err(|_| Error::Synth(format!("bad spike probability in '{s}'")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Synth(format!(
                        "spike probability {p} outside [0, 1]"
                    )));
                }
                Ok(Distribution::SpikeAtZero(p))
            }
        }
    }
}

impl Distribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Distribution::Normal => rng.sample(StandardNormal),
            Distribution::Uniform => rng.random_range(-1.0..1.0),
            Distribution::SpikeAtZero(p) => {
                if rng.random_bool(p) {
                    0.0
                } else {
                    StandardNormal.sample(rng)
                }
            }
        }
    }
}

/// Parses `name=AxBxC`. An empty dimension list (`name=`) is a scalar.
pub fn parse_tensor_spec(s: &str) -> Result<(String, Vec<usize>)> {
    let (name, dims) = s
        .split_once('=')
        .ok_or_else(|| Error::Synth(format!("tensor spec '{s}' must look like name=AxB")))?;
    if name.is_empty() {
        return Err(Error::Synth(format!("tensor spec '{s}' has no name")));
    }
    let shape = if dims.is_empty() {
        Vec::new()
    } else {
        dims.split('x')
            .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Synth(format!("bad shape in tensor spec '{s}'")))?
    };
    Ok((name.into(), shape))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub distribution: Distribution,
    pub tensors: Vec<(String, Vec<usize>)>,
    pub dtype: DType,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tensors.is_empty() {
            return Err(Error::Synth("no tensors requested".into()));
        }
        let mut seen = BTreeSet::new();
        for (name, _) in &self.tensors {
            if !seen.insert(name) {
                return Err(Error::Synth(format!("tensor '{name}' requested twice")));
            }
        }
        Ok(())
    }
}

/// Writes a container drawn from one seeded stream, tensors in name order.
/// Values are rounded to the target dtype as they are encoded.
pub fn synth<W: Write>(spec: &SynthSpec, out: &mut W) -> Result<()> {
    spec.validate()?;
    let layouts: Vec<TensorLayout> = spec
        .tensors
        .iter()
        .map(|(name, shape)| TensorLayout {
            name: name.clone(),
            dtype: spec.dtype,
            shape: shape.clone(),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.dtype.byte_width();
    write_container_streaming(out, &layouts, None, |l| {
        let numel: usize = l.shape.iter().product();
        let mut bytes = vec![0u8; numel * width];
        for chunk in bytes.chunks_exact_mut(width) {
            l.dtype.encode(spec.distribution.sample(&mut rng), chunk);
        }
        Ok(bytes)
    })
}

pub fn synth_bytes(spec: &SynthSpec) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    synth(spec, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::Container;
    use crate::filter::TensorFilter;
    use sparsity_core::{zero_census, Sequential};

    fn spec(distribution: Distribution, seed: u64) -> SynthSpec {
        SynthSpec {
            distribution,
            tensors: vec![("w".into(), vec![100, 100])],
            dtype: DType::F32,
            seed,
        }
    }

    fn zero_fraction(bytes: Vec<u8>) -> f64 {
        let c = Container::from_bytes(bytes).unwrap();
        zero_census(&c, &c.infos(&TensorFilter::all()), 0.0, &Sequential)
            .unwrap()
            .zero_fraction()
    }

    #[test]
    fn spike_fraction_matches_expectation() {
        let f = zero_fraction(synth_bytes(&spec(Distribution::SpikeAtZero(0.3), 7)).unwrap());
        // binomial sd for n = 1e4, p = 0.3 is ~0.0046
        assert!((f - 0.30).abs() <= 0.01, "{f}");
    }

    #[test]
    fn normal_has_no_zeros() {
        assert_eq!(
            zero_fraction(synth_bytes(&spec(Distribution::Normal, 1)).unwrap()),
            0.0
        );
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_bytes(&spec(Distribution::Uniform, 3)).unwrap();
        assert_eq!(a, synth_bytes(&spec(Distribution::Uniform, 3)).unwrap());
        assert_ne!(a, synth_bytes(&spec(Distribution::Uniform, 4)).unwrap());
        let c = Container::from_bytes(a).unwrap();
        assert!(c
            .read_values("w")
            .unwrap()
            .iter()
            .all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn parsing() {
        assert_eq!(
            "spike:0.25".parse::<Distribution>().unwrap(),
            Distribution::SpikeAtZero(0.25)
        );
        assert!("spike:1.5".parse::<Distribution>().is_err());
        assert!("cauchy".parse::<Distribution>().is_err());
        assert_eq!(
            parse_tensor_spec("a.weight=3x4").unwrap(),
            ("a.weight".into(), vec![3, 4])
        );
        assert_eq!(parse_tensor_spec("s=").unwrap(), ("s".into(), vec![]));
        assert!(parse_tensor_spec("a=3x0").is_err());
        assert!(parse_tensor_spec("a").is_err());
        assert!(parse_tensor_spec("=3").is_err());
    }
}
