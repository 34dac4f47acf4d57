//! Synthetic datasets, Adam, the training loop, checkpoints and inference.

mod adam;
mod checkpoint;
mod dataset;
mod infer;
mod prepare;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use dataset::{generate_dataset, generate_record, write_dataset, Dataset, DatasetSpec, Record};
pub use infer::{infer_fuse, infer_fuse_many};
pub use prepare::{denormalize_output, normalize_input, normalize_label, PreparedSet};
pub use trainer::{batch_gradient, mean_loss, EpochLog, TrainConfig, TrainReport, Trainer};
