//! Aux pretraining, sequential and joint recognizer training, checkpoints,
//! and the ablation runner.

mod ablation;
mod checkpoint;
mod config;
mod loops;

pub use ablation::{run_ablation, AblationConfig, AblationData, AblationRow, AblationTable, Variant};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{log_to_jsonl, AuxTraining, EarlyStopping, LogRecord, LossBreakdown, TrainConfig};
pub use loops::{
    train_aux, train_from, train_mdd, train_mdd_joint, train_mdd_sequential, AuxModel, AuxRun, Evaluation, MddModel,
    TrainRun,
};
