//! Weight-space consolidation: importance scoring, dormant-parameter resets,
//! running weight averages and the task-level training loops.

mod averaging;
mod config;
mod importance;
mod reset;
mod trainer;

pub use averaging::{update_running_average, RunningAverage};
pub use config::{
    AvgCountMode, ConsolidationSchedule, ImportanceMetric, RankingScope, ResetConfig, ResetFrequency, ResetStrategy,
};
pub use importance::{
    hutchinson_diagonal, score_fisher, score_first_moment, score_hessian_hutchinson, score_moment, score_moment_with,
    score_param_drift, score_second_moment, ImportanceVector,
};
pub use reset::{
    alt_reset, continual_backprop_reset, eligible_coordinates, find_dormant_params, reset_count, soft_reset,
    unit_utilities,
};
pub use trainer::{
    buffer_before, buffer_seed, replay_train_task, scratch_train, wsc_train_task, EpochRecord, ResetEvent,
    ScratchConfig, TaskTrainReport, TrainContext, SHADOW_BETA1, SHADOW_BETA2,
};
