//! Supervised fine-tuning of a DBN with a softmax head: cross-entropy
//! backpropagation and nonlinear conjugate gradient (Polak–Ribière with
//! Armijo backtracking).
//!
//! Training runs over large mini-batches; on each batch the optimizer takes a
//! fixed number of line-searched CG steps starting from steepest descent.
//! Only hidden biases and weights of the RBM layers take part; visible biases
//! are not used by the upward pass.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{shuffle_batches, Dataset};
use crate::dbn::{softmax_rows, Dbn};
use crate::error::{ensure, Error, Result};
use crate::math::{dot, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    ConjugateGradient,
    /// Plain gradient steps of fixed size.
    GradientDescent {
        learning_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneParams {
    pub epochs: usize,
    pub batch_size: usize,
    /// Optimizer steps per mini-batch.
    pub iterations_per_batch: usize,
    /// Leading epochs during which only the head is updated.
    pub head_warmup_epochs: usize,
    /// Update only the head for every epoch.
    pub head_only: bool,
    pub optimizer: Optimizer,
}

impl Default for FineTuneParams {
    fn default() -> Self {
        FineTuneParams {
            epochs: 30,
            batch_size: 1000,
            iterations_per_batch: 3,
            head_warmup_epochs: 5,
            head_only: false,
            optimizer: Optimizer::ConjugateGradient,
        }
    }
}

impl FineTuneParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.batch_size > 0,
            Config,
            "fine-tune batch size must be positive"
        );
        ensure!(
            self.iterations_per_batch > 0,
            Config,
            "iterations per batch must be positive"
        );
        if let Optimizer::GradientDescent { learning_rate } = self.optimizer {
            ensure!(
                learning_rate > 0.0 && learning_rate.is_finite(),
                Config,
                "gradient-descent learning rate must be positive"
            );
        }
        Ok(())
    }
}

/// Which parameters a packed vector covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Full,
    HeadOnly,
}

/// Packs trainable parameters: per layer `W` then `a`, then head `W_out`, `b_out`.
pub fn pack(dbn: &Dbn, scope: Scope) -> Result<Vec<f64>> {
    let head = dbn
        .head
        .as_ref()
        .ok_or_else(|| Error::State("fine-tuning requires a softmax head".into()))?;
    let mut out = Vec::new();
    if scope == Scope::Full {
        for layer in &dbn.layers {
            out.extend_from_slice(layer.weights().as_slice());
            out.extend_from_slice(layer.hidden_bias());
        }
    }
    out.extend_from_slice(head.w_out.as_slice());
    out.extend_from_slice(&head.b_out);
    Ok(out)
}

/// Inverse of [`pack`].
pub fn unpack(dbn: &mut Dbn, scope: Scope, params: &[f64]) -> Result<()> {
    let expected = pack(dbn, scope)?.len();
    ensure!(
        params.len() == expected,
        Contract,
        "parameter vector has length {}, expected {expected}",
        params.len()
    );
    let mut rest = params;
    let mut take = |dst: &mut [f64]| {
        let (head, tail) = rest.split_at(dst.len());
        dst.copy_from_slice(head);
        rest = tail;
    };
    if scope == Scope::Full {
        for layer in &mut dbn.layers {
            take(layer.weights_mut().as_mut_slice());
            take(layer.hidden_bias_mut());
        }
    }
    let head = dbn.head.as_mut().unwrap();
    take(head.w_out.as_mut_slice());
    take(&mut head.b_out);
    Ok(())
}

/// Mean cross-entropy of the softmax head over a labeled batch.
pub fn cross_entropy(dbn: &Dbn, batch: &Matrix, labels: &[u8]) -> Result<f64> {
    let head = dbn
        .head
        .as_ref()
        .ok_or_else(|| Error::State("cross-entropy requires a softmax head".into()))?;
    let logits = head.logits(&dbn.forward_batch(batch)?)?;
    Ok(mean_nll(&logits, labels))
}

fn mean_nll(logits: &Matrix, labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += crate::math::log_sum_exp(row) - row[y as usize];
    }
    total / labels.len() as f64
}

/// Cross-entropy and its gradient with respect to the packed parameters.
pub fn loss_and_grad(
    dbn: &Dbn,
    batch: &Matrix,
    labels: &[u8],
    scope: Scope,
) -> Result<(f64, Vec<f64>)> {
    let head = dbn
        .head
        .as_ref()
        .ok_or_else(|| Error::State("fine-tuning requires a softmax head".into()))?;
    ensure!(
        batch.rows() == labels.len() && !labels.is_empty(),
        Contract,
        "{} samples but {} labels",
        batch.rows(),
        labels.len()
    );
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= head.classes()) {
        return Err(Error::Contract(format!(
            "label {bad} outside the head's classes"
        )));
    }
    let acts = match scope {
        Scope::Full => dbn.forward_all(batch)?,
        Scope::HeadOnly => vec![dbn.forward_batch(batch)?],
    };
    let top = acts.last().unwrap();
    let logits = head.logits(top)?;
    let loss = mean_nll(&logits, labels);

    let n = labels.len() as f64;
    let mut delta = logits;
    softmax_rows(&mut delta);
    for (i, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[y as usize] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    let g_wout = top.t_matmul(&delta)?;
    let g_bout = delta.column_sums();

    let mut layer_grads: Vec<(Matrix, Vec<f64>)> = Vec::new();
    if scope == Scope::Full {
        let mut d_act = delta.matmul(&head.w_out.transpose())?;
        for l in (0..dbn.layers.len()).rev() {
            let out = &acts[l + 1];
            let mut d_pre = d_act;
            d_pre
                .as_mut_slice()
                .iter_mut()
                .zip(out.as_slice())
                .for_each(|(d, &a)| *d *= a * (1.0 - a));
            let gw = acts[l].t_matmul(&d_pre)?;
            let ga = d_pre.column_sums();
            d_act = if l > 0 {
                d_pre.matmul(&dbn.layers[l].weights().transpose())?
            } else {
                Matrix::zeros(0, 0)
            };
            layer_grads.push((gw, ga));
        }
        layer_grads.reverse();
    }

    let mut grad = Vec::new();
    for (gw, ga) in &layer_grads {
        grad.extend_from_slice(gw.as_slice());
        grad.extend_from_slice(ga);
    }
    grad.extend_from_slice(g_wout.as_slice());
    grad.extend_from_slice(&g_bout);
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iterations: usize,
    /// Reset to steepest descent after this many directions.
    pub restart_every: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl CgOptions {
    pub fn new(max_iterations: usize, n_params: usize) -> Self {
        CgOptions {
            max_iterations,
            restart_every: n_params.max(1),
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub losses: Vec<f64>,
}

/// Polak–Ribière (PR+) nonlinear conjugate gradient with backtracking line
/// search. Stops early when no step satisfies the Armijo condition.
pub fn minimize_cg<F>(mut f: F, x0: Vec<f64>, opts: CgOptions) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut losses = vec![fx];
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut slope = dot(&g, &d);
    let mut alpha = 1.0 / dot(&g, &g).sqrt().max(1e-12);
    let mut since_restart = 0;

    for _ in 0..opts.max_iterations {
        if slope >= 0.0 || !slope.is_finite() {
            break;
        }
        let mut accepted = None;
        let mut step = alpha;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            if ft.is_finite() && ft <= fx + opts.c1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= opts.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        since_restart += 1;
        let g_norm2 = dot(&g, &g);
        let beta = if since_restart >= opts.restart_every || g_norm2 == 0.0 {
            since_restart = 0;
            0.0
        } else {
            let y: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
            (y / g_norm2).max(0.0)
        };
        let mut d_new: Vec<f64> = g_new
            .iter()
            .zip(&d)
            .map(|(gn, dp)| -gn + beta * dp)
            .collect();
        let mut slope_new = dot(&g_new, &d_new);
        if slope_new >= 0.0 {
            d_new = g_new.iter().map(|v| -v).collect();
            slope_new = dot(&g_new, &d_new);
            since_restart = 0;
        }
        // next trial step: match the previous decrease, then allow growth
        alpha = (2.0 * step * slope / slope_new).min(step * 10.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            alpha = step;
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        d = d_new;
        slope = slope_new;
        losses.push(fx);
    }
    Ok(CgOutcome { x, losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub head_only: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FineTuneLog {
    pub epochs: Vec<FineTuneEpoch>,
    /// Objective values seen by the optimizer on every batch (start + accepted steps).
    pub batch_losses: Vec<Vec<f64>>,
}

impl FineTuneLog {
    pub const CSV_HEADER: &'static str =
        "epoch,phase,train_loss,train_accuracy,test_accuracy,wall_seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let test = e.test_accuracy.map_or(String::new(), |a| format!("{a:.6}"));
            out.push_str(&format!(
                "{},{},{:.10},{:.6},{},{:.3}\n",
                e.epoch,
                if e.head_only { "head" } else { "full" },
                e.train_loss,
                e.train_accuracy,
                test,
                e.wall_seconds
            ));
        }
        out
    }
}

fn optimize_batch(
    dbn: &mut Dbn,
    batch: &Matrix,
    labels: &[u8],
    scope: Scope,
    params: &FineTuneParams,
) -> Result<Vec<f64>> {
    let x0 = pack(dbn, scope)?;
    match params.optimizer {
        Optimizer::ConjugateGradient => {
            // The upward pass is fixed when only the head moves.
            let (features, work_scope) = match scope {
                Scope::HeadOnly => (dbn.forward_batch(batch)?, Scope::HeadOnly),
                Scope::Full => (batch.clone(), Scope::Full),
            };
            let mut work = match scope {
                Scope::HeadOnly => head_only_view(dbn)?,
                Scope::Full => dbn.clone(),
            };
            let opts = CgOptions::new(params.iterations_per_batch, x0.len());
            let outcome = minimize_cg(
                |theta| {
                    unpack(&mut work, work_scope, theta)?;
                    loss_and_grad(&work, &features, labels, work_scope)
                },
                x0,
                opts,
            )?;
            unpack(dbn, scope, &outcome.x)?;
            Ok(outcome.losses)
        }
        Optimizer::GradientDescent { learning_rate } => {
            let mut theta = x0;
            let mut losses = Vec::new();
            for _ in 0..params.iterations_per_batch {
                let (loss, grad) = loss_and_grad(dbn, batch, labels, scope)?;
                losses.push(loss);
                theta
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(t, g)| *t -= learning_rate * g);
                unpack(dbn, scope, &theta)?;
            }
            losses.push(cross_entropy(dbn, batch, labels)?);
            Ok(losses)
        }
    }
}

/// A network whose forward pass is the identity: used to optimize the head
/// on precomputed top-layer features.
fn head_only_view(dbn: &Dbn) -> Result<Dbn> {
    Ok(Dbn {
        layers: Vec::new(),
        head: dbn.head.clone(),
        layer_configs: Vec::new(),
    })
}

/// Minimizes cross-entropy over the whole stack and head. With zero epochs
/// the parameters are untouched.
pub fn fine_tune(
    dbn: &mut Dbn,
    train: &Dataset,
    test: Option<&Dataset>,
    params: &FineTuneParams,
    rng: &mut Rng,
) -> Result<FineTuneLog> {
    params.validate()?;
    ensure!(!train.is_empty(), Contract, "fine-tuning data is empty");
    ensure!(
        train.images().cols() == dbn.input_size(),
        Config,
        "dataset has {} pixels per image but the network expects {}",
        train.images().cols(),
        dbn.input_size()
    );
    if dbn.head.is_none() {
        return Err(Error::State("fine-tuning requires a softmax head".into()));
    }
    let mut log = FineTuneLog::default();
    for epoch in 0..params.epochs {
        let started = Instant::now();
        let head_only = params.head_only || epoch < params.head_warmup_epochs;
        let scope = if head_only {
            Scope::HeadOnly
        } else {
            Scope::Full
        };
        for idx in shuffle_batches(train.len(), params.batch_size, rng)? {
            let batch = train.images().select_rows(&idx);
            let labels: Vec<u8> = idx.iter().map(|&i| train.labels()[i]).collect();
            let losses = optimize_batch(dbn, &batch, &labels, scope, params)?;
            if losses.last().is_some_and(|l| !l.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss in epoch {}",
                    epoch + 1
                )));
            }
            log.batch_losses.push(losses);
        }
        let train_loss = cross_entropy(dbn, train.images(), train.labels())?;
        let train_accuracy = dbn.evaluate(train)?.accuracy;
        let test_accuracy = test
            .map(|t| dbn.evaluate(t))
            .transpose()?
            .map(|e| e.accuracy);
        log.epochs.push(FineTuneEpoch {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            test_accuracy,
            head_only,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}
