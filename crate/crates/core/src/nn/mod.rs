//! Dense feed-forward networks with hand-written reverse-mode gradients and
//! an Adam optimizer. Shared by the policy and the betrayal classifier.

mod adam;
mod checkpoint;
mod loss;
mod network;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{log_softmax, softmax, softmax_xent};
pub use network::{Activation, ForwardCache, Head, HeadRole, LayerSpec, NetworkParams};
