//! Dense two-layer network numerics.
//!
//! Only the affine–ReLU–affine shape used by both the policy and the triplet
//! scorer is supported, so backpropagation is written out by hand. Parameters
//! and activations are `f64`; checkpoints store them as `f64` as well.

mod checkpoint;
mod gradcheck;
mod loss;
mod mlp;
mod optim;

pub use checkpoint::{load_checkpoint, meta_path, save_checkpoint, CheckpointMeta, ModelKind};
pub use gradcheck::{finite_diff_check, finite_diff_check_params, GradCheck};
pub use loss::{cross_entropy_loss, log_softmax, sigmoid, sigmoid_bce, softmax, LOG_CLAMP};
pub use mlp::{DenseParams, Forward, ForwardCache, Mode};
pub use optim::{Algorithm, OptimState};
