//! Mini-batch training: objective, optimizer loop and gradient checking.

mod config;
pub mod gradcheck;
mod objective;
mod trainer;

pub use config::TrainConfig;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use objective::{batch_objective, objective_value, BatchObjective};
pub use trainer::{evaluate_validation, train, train_step, EpochRecord, StepStats, TrainLog, TrainOutcome};
