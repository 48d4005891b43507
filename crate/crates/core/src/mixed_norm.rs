//! The l1,2 mixed-norm penalty on hidden activation probabilities, its exact
//! gradient, and the two-step regularized update.
//!
//! For a visible vector `x` with hidden probabilities `p`, the penalty is
//! `Σ_G ‖p_G‖₂` over the groups of a [`GroupPartition`] (on the augmented axis
//! when groups overlap). Differentiating through `p_j = σ(a_j + Σ_i x_i w_ij)`
//! gives, for each augmented copy `t` of unit `j` in group `G`,
//!
//! ```text
//! s_t = p_j² (1 - p_j) / max(‖p_G‖₂, ε)
//! ∂/∂a_j  = Σ_{copies t of j} s_t
//! ∂/∂w_ij = x_i · ∂/∂a_j
//! ```
//!
//! The regularized update first applies the CD update and then descends the
//! penalty: `w -= lr·λ·∇_w`, `a -= lr·λ·∇_a`. Visible biases are never
//! penalized. The sign is a descent on the penalty; adding the gradient would
//! raise activations instead of pushing groups toward zero.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::groups::GroupPartition;
use crate::math::{check_len, l2_norm, Matrix};
use crate::rbm::{CdStats, Rbm, Velocity};
use crate::rng::Rng;

/// Floor on a group norm in the gradient denominator.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub partition: GroupPartition,
    pub epsilon: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, partition: GroupPartition) -> Result<Self> {
        Self::with_epsilon(lambda, partition, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(lambda: f64, partition: GroupPartition, epsilon: f64) -> Result<Self> {
        ensure!(
            lambda >= 0.0 && lambda.is_finite(),
            Config,
            "lambda must be a finite value >= 0, got {lambda}"
        );
        ensure!(
            epsilon > 0.0 && epsilon <= 1e-6,
            Config,
            "epsilon must lie in (0, 1e-6], got {epsilon}"
        );
        Ok(PenaltyConfig {
            lambda,
            partition,
            epsilon,
        })
    }

    /// Unregularized configuration over `hidden` units grouped by `group_size`.
    pub fn vanilla(hidden: usize, group_size: usize) -> Result<Self> {
        Self::new(
            0.0,
            GroupPartition::make_nonoverlapping(hidden, group_size)?,
        )
    }
}

/// Penalty gradient for one visible vector or averaged over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrad {
    pub gw: Matrix,
    pub ga: Vec<f64>,
}

/// `Σ_G ‖p_G‖₂` over the partition's groups.
pub fn mixed_norm(h_probs: &[f64], partition: &GroupPartition) -> Result<f64> {
    let aug = partition.expand(h_probs)?;
    Ok(partition.groups().map(|g| l2_norm(&aug[g])).sum())
}

/// Per-unit coefficients `∂ penalty / ∂ a_j`, summed over augmented copies.
pub fn penalty_coefficients(
    h_probs: &[f64],
    partition: &GroupPartition,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let aug = partition.expand(h_probs)?;
    let mut scaled = vec![0.0; aug.len()];
    for g in partition.groups() {
        let norm = l2_norm(&aug[g.clone()]).max(epsilon);
        for t in g {
            let p = aug[t];
            scaled[t] = p * p * (1.0 - p) / norm;
        }
    }
    partition.accumulate(&scaled)
}

/// Exact gradient of `mixed_norm(prob_h_given_x(x))` with respect to `W` and `a`.
pub fn penalty_grad(m: &Rbm, x: &[f64], cfg: &PenaltyConfig) -> Result<PenaltyGrad> {
    check_len("partition size", cfg.partition.j_original(), m.hidden())?;
    let p = m.prob_h_given_x(x)?;
    let ga = penalty_coefficients(&p, &cfg.partition, cfg.epsilon)?;
    let gw = Matrix::from_fn(m.visible(), m.hidden(), |i, j| x[i] * ga[j]);
    Ok(PenaltyGrad { gw, ga })
}

/// Batch-averaged penalty gradient given precomputed hidden probabilities.
fn batch_penalty_grad_from_probs(
    batch: &Matrix,
    h_probs: &Matrix,
    cfg: &PenaltyConfig,
) -> Result<PenaltyGrad> {
    let mut coeffs = Matrix::zeros(h_probs.rows(), h_probs.cols());
    for l in 0..h_probs.rows() {
        let c = penalty_coefficients(h_probs.row(l), &cfg.partition, cfg.epsilon)?;
        coeffs.row_mut(l).copy_from_slice(&c);
    }
    let inv_l = 1.0 / batch.rows() as f64;
    let mut gw = batch.t_matmul(&coeffs)?;
    gw.scale_in_place(inv_l);
    let ga = coeffs
        .column_sums()
        .into_iter()
        .map(|s| s * inv_l)
        .collect();
    Ok(PenaltyGrad { gw, ga })
}

/// `(1/L) Σ_l penalty_grad(x^l)`.
pub fn batch_penalty_grad(m: &Rbm, batch: &Matrix, cfg: &PenaltyConfig) -> Result<PenaltyGrad> {
    check_len("partition size", cfg.partition.j_original(), m.hidden())?;
    ensure!(batch.rows() > 0, Contract, "empty batch");
    let h = m.hidden_probs(batch)?;
    batch_penalty_grad_from_probs(batch, &h, cfg)
}

/// Hyperparameters of one regularized step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub cd_k: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

/// What a regularized step observed, before any parameter change.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub stats: CdStats,
    /// `Σ_l ‖x^l − x̃^l‖²`
    pub squared_error_sum: f64,
    /// `Σ_l Σ_j p(h_j = 1 | x^l)`
    pub activation_sum: f64,
    /// `Σ_l mixed_norm(p(h | x^l))`
    pub mixed_norm_sum: f64,
}

/// One two-step update: CD on `θ`, then a descent step on the penalty for
/// `W` and `a` using hidden probabilities under the post-CD parameters.
/// With `λ = 0` the second step is skipped, so the result and the random
/// draws are those of the plain CD update.
pub fn regularized_update(
    m: &mut Rbm,
    batch: &Matrix,
    cfg: &PenaltyConfig,
    step: StepParams,
    velocity: &mut Velocity,
    rng: &mut Rng,
) -> Result<StepReport> {
    check_len("partition size", cfg.partition.j_original(), m.hidden())?;
    let mut streams = rng.split(batch.rows());
    let (stats, chain) = m.cd_step_detailed(batch, step.cd_k, &mut streams)?;

    let squared_error_sum = batch
        .as_slice()
        .iter()
        .zip(chain.x_tilde.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let activation_sum = chain.h0.as_slice().iter().sum();
    let mut mixed_norm_sum = 0.0;
    for l in 0..chain.h0.rows() {
        mixed_norm_sum += mixed_norm(chain.h0.row(l), &cfg.partition)?;
    }

    m.apply_update(&stats, step.learning_rate, step.momentum, velocity)?;

    if cfg.lambda > 0.0 {
        let grad = batch_penalty_grad(m, batch, cfg)?;
        let scale = -step.learning_rate * cfg.lambda;
        m.w.add_scaled(scale, &grad.gw)?;
        m.a_hid
            .iter_mut()
            .zip(&grad.ga)
            .for_each(|(a, g)| *a += scale * g);
        m.check_finite()?;
    }

    Ok(StepReport {
        stats,
        squared_error_sum,
        activation_sum,
        mixed_norm_sum,
    })
}
