//! Group-sparse (mixed l1,2 norm) restricted Boltzmann machines and deep
//! belief networks: training, exact small-model oracles, fine-tuning,
//! data loading, model files and report generation.

pub mod data;
pub mod dbn;
pub mod error;
pub mod exact;
pub mod finetune;
pub mod groups;
pub mod math;
pub mod mixed_norm;
pub mod model_io;
pub mod rbm;
pub mod report;
pub mod rng;
pub mod train;

pub use data::{load_idx, load_usps, Dataset, Split};
pub use dbn::{pretrain_greedy, pretrain_greedy_with, Dbn, Evaluation, SoftmaxLayer};
pub use error::{Error, Result};
pub use finetune::{fine_tune, FineTuneLog, FineTuneParams, Optimizer};
pub use groups::GroupPartition;
pub use math::{sigmoid, Matrix};
pub use mixed_norm::{mixed_norm, penalty_grad, regularized_update, PenaltyConfig, StepParams};
pub use rbm::{CdStats, Rbm, Velocity};
pub use rng::Rng;
pub use train::{train_mnrbm, TrainParams, TrainingLog};
