//! MNIST ingestion (IDX files) and synthetic stand-in data.

mod batch;
mod idx;

pub use batch::{fingerprint_inputs, make_batch, normalize, Batch, Dataset, Normalization, Source, SyntheticSpec};
pub use idx::{load_idx, read_idx_file, write_idx, IdxTensor};
