//! File formats, name filters, parallel execution and the command line for
//! the sparsity toolkit. The algorithms live in `sparsity-core`.
//!
//! Containers are read lazily: opening one parses only the JSON header, and
//! each tensor is read and widened to `f64` when an operation asks for it.

pub mod cli;
pub mod container;
pub mod curve_io;
mod error;
pub mod exec;
pub mod filter;
pub mod maskfile;
pub mod ops;
pub mod output;
pub mod rules;
pub mod series;
pub mod synth;

pub use container::{Container, TensorEntry, TensorMeta};
pub use error::{Error, FormatError, MaskFileError, Result};
pub use exec::Rayon;
pub use filter::TensorFilter;
pub use maskfile::{decode_mask, encode_mask, read_mask, write_mask};
