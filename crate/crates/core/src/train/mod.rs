//! Task heads, losses, optimizer, schedule, metrics and multi-seed runs.

mod experiment;
mod head;
mod loss;
mod optim;
mod report;

pub use experiment::{prepare, run_experiment, run_experiment_with, train_seed, Prepared, TrainedModel};
pub use head::{graph_readout, TaskHead};
pub use loss::{accuracy, l1_loss, mean_absolute_error, weighted_accuracy, weighted_cross_entropy};
pub use optim::{replay_schedule, Adam, PlateauSchedule, ScheduleConfig, ScheduleStep, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use report::{mean_and_sd, EpochRecord, RunReport, SeedResult, Summary};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("{what}: {got} predictions for {expected} targets")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("configuration: {0}")]
    Contradiction(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
