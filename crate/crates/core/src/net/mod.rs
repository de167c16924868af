mod checkpoint;
mod loss;
mod mask;
mod mlp;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{cross_entropy, squared_error, Loss};
pub use mask::{LayerMask, Mask, PruneScope};
pub use mlp::{Activation, AdamConfig, AdamState, ForwardCache, MaskedMlp};
