//! Stochastic optimizers: projected SGD and Adam on a penalized objective,
//! and GCMMA on batch-mean estimates of objective and constraints.

mod adam;
mod checkpoint;
mod gcmma;
mod penalty;
mod run;

pub use adam::{adam_step, sgd_step, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use gcmma::{gcmma_step, gcmma_step_conservative, GcmmaOutcome, GcmmaParams, GcmmaState};
pub use penalty::{penalty_descent_direction, penalty_value, squared_violation, PenaltySpec};
pub use run::{
    calibrate_normalizer, history_header, history_row, run_loop, EarlyStop, IterationRecord, OptimizerKind,
    OptimizerSpec, OptimizerState, RunOutcome, RunState,
};
