//! Epoch loop for (mixed-norm) RBM training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::shuffle_batches;
use crate::error::{ensure, Result};
use crate::math::Matrix;
use crate::mixed_norm::{regularized_update, PenaltyConfig, StepParams};
use crate::rbm::{Rbm, Velocity};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Epoch index from which `final_momentum` applies.
    pub momentum_switch_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub cd_k: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.1,
            initial_momentum: 0.5,
            final_momentum: 0.9,
            momentum_switch_epoch: 5,
            batch_size: 100,
            epochs: 30,
            cd_k: 1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Config,
            "learning rate must be positive, got {}",
            self.learning_rate
        );
        for (name, m) in [
            ("initial momentum", self.initial_momentum),
            ("final momentum", self.final_momentum),
        ] {
            ensure!(
                (0.0..1.0).contains(&m),
                Config,
                "{name} must lie in [0, 1), got {m}"
            );
        }
        ensure!(self.batch_size > 0, Config, "batch size must be positive");
        ensure!(self.cd_k > 0, Config, "cd_k must be at least 1");
        Ok(())
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        if epoch < self.momentum_switch_epoch {
            self.initial_momentum
        } else {
            self.final_momentum
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over samples of `‖x − x̃‖²`.
    pub recon_error: f64,
    pub mean_hidden_activation: f64,
    /// Mean over samples of the mixed norm of `p(h | x)`.
    pub mixed_norm_value: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str =
        "epoch,recon_error,mean_hidden_activation,mixed_norm_value,wall_seconds";

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.10},{:.10},{:.10},{:.3}\n",
                r.epoch,
                r.recon_error,
                r.mean_hidden_activation,
                r.mixed_norm_value,
                r.wall_seconds
            ));
        }
        out
    }
}

/// Trains a fresh `data.cols() × layer_size` RBM with the two-step
/// regularized update for a fixed epoch budget. Draws the initial weights,
/// every epoch permutation and every batch's chain streams from `rng`.
pub fn train_mnrbm(
    data: &Matrix,
    layer_size: usize,
    cfg: &PenaltyConfig,
    params: &TrainParams,
    rng: &mut Rng,
) -> Result<(Rbm, TrainingLog)> {
    let mut model = Rbm::init_random(data.cols(), layer_size, rng);
    let log = continue_training(&mut model, data, cfg, params, rng)?;
    Ok((model, log))
}

/// Runs `params.epochs` epochs on an existing model.
pub fn continue_training(
    model: &mut Rbm,
    data: &Matrix,
    cfg: &PenaltyConfig,
    params: &TrainParams,
    rng: &mut Rng,
) -> Result<TrainingLog> {
    params.validate()?;
    ensure!(data.rows() > 0, Contract, "training data is empty");
    ensure!(
        data.cols() == model.visible(),
        Contract,
        "training data has {} columns but the model has {} visible units",
        data.cols(),
        model.visible()
    );
    ensure!(
        cfg.partition.j_original() == model.hidden(),
        Config,
        "group partition covers {} units but the layer has {}",
        cfg.partition.j_original(),
        model.hidden()
    );
    let n = data.rows() as f64;
    let mut velocity = Velocity::zeros_like(model);
    let mut log = TrainingLog::default();
    for epoch in 0..params.epochs {
        let started = Instant::now();
        let step = StepParams {
            cd_k: params.cd_k,
            learning_rate: params.learning_rate,
            momentum: params.momentum_at(epoch),
        };
        let (mut sq, mut act, mut mn) = (0.0, 0.0, 0.0);
        for batch_idx in shuffle_batches(data.rows(), params.batch_size, rng)? {
            let batch = data.select_rows(&batch_idx);
            let report = regularized_update(model, &batch, cfg, step, &mut velocity, rng)?;
            sq += report.squared_error_sum;
            act += report.activation_sum;
            mn += report.mixed_norm_sum;
        }
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            recon_error: sq / n,
            mean_hidden_activation: act / (n * model.hidden() as f64),
            mixed_norm_value: mn / n,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Mean of `p(h_j = 1 | x)` over all samples and hidden units.
pub fn mean_hidden_activation(model: &Rbm, data: &Matrix) -> Result<f64> {
    Ok(model.hidden_probs(data)?.mean())
}
