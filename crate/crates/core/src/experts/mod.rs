//! Message-passing experts: configuration, propagation operators, training
//! with hand-derived gradients, fine-tuning, gradient checking and
//! checkpoints.

mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod propagation;
mod train;

pub use checkpoint::{load_checkpoint, read_logits_csv, save_checkpoint, write_logits_csv, CheckpointHeader};
pub use config::{ExpertConfig, Filter, Skip, MAX_DEPTH};
pub use gradcheck::{gradient_check, GradCheckReport, TensorCheck, FD_STEP};
pub use model::{Cache, Mode, Network, Params};
pub use propagation::{build_propagation, PropagationOperator, SparseMatrix};
pub use train::{fine_tune, predict, train_expert, train_expert_masked, EpochRecord, Expert, FineTuneConfig};
