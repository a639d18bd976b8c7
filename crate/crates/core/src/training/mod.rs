//! Mini-batch training, model selection and multi-run statistics.

mod batch;
mod stats;
mod trainer;

pub use batch::{nll_loss, Batch, NllReport};
pub use stats::RunStats;
pub use trainer::{
    evaluate, fit_report, multi_run, multi_run_with, prepare_all, train, EarlyStopping, EpochLog, Evaluation, MultiRunOutcome,
    RunRecord, TrainConfig, TrainOutcome,
};
