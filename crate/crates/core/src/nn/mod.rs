//! Attention-over-features binary classifier.
//!
//! Each feature value owns an embedding row. For a sample with `m` features the
//! gathered embeddings form `E` (`d_e × m`), and
//!
//! ```text
//! H = tanh(E),  α = softmax(wᵀH),  α' = α ⊙ mask,  r = tanh(E α'ᵀ)
//! hidden = relu(W1 r + b1),  logit = W2 · hidden + b2,  prob = σ(logit)
//! ```
//!
//! The mask multiplies the normalized attention weights and is not
//! renormalized afterwards, so a zeroed feature contributes nothing to `r`.

mod checkpoint;
mod grad;
mod model;
mod train;

pub use checkpoint::{Checkpoint, NamedArray, CHECKPOINT_FORMAT};
pub use grad::{loss_and_grad, sgd_step, PROB_CLAMP};
pub use model::{
    logistic, predict, AttentionClassifier, AttentionMask, ForwardTrace, Parameters,
    DEFAULT_THRESHOLD,
};
pub use train::{train, train_with_history, TrainConfig};
