//! Binary restricted Boltzmann machine: energy, factorized conditionals,
//! Gibbs sampling and the contrastive-divergence statistics.
//!
//! Visible values may be real numbers in [0, 1]; they are treated as
//! activation probabilities. Hidden states are sampled during the chain, but
//! the final reconstruction and its hidden response are kept as
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::math::{affine_sigmoid, check_len, dot, sigmoid, Matrix};
use crate::rng::Rng;

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rbm {
    /// Weights, `visible × hidden`.
    pub(crate) w: Matrix,
    pub(crate) b_vis: Vec<f64>,
    pub(crate) a_hid: Vec<f64>,
}

/// Batch-averaged gradient estimate, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CdStats {
    pub dw: Matrix,
    pub db_vis: Vec<f64>,
    pub da_hid: Vec<f64>,
    pub batch_size: usize,
}

/// Momentum buffers with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub dw: Matrix,
    pub db_vis: Vec<f64>,
    pub da_hid: Vec<f64>,
}

/// Output of a Gibbs chain started at a data vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSample {
    /// Final reconstruction, as probabilities.
    pub x_tilde: Vec<f64>,
    pub h0_probs: Vec<f64>,
    pub h_tilde_probs: Vec<f64>,
}

/// Batched chain state; row `l` belongs to sample `l`.
#[derive(Debug, Clone)]
pub(crate) struct GibbsBatch {
    pub h0: Matrix,
    pub x_tilde: Matrix,
    pub h_tilde: Matrix,
}

impl Rbm {
    /// All-zero parameters.
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Rbm {
            w: Matrix::zeros(visible, hidden),
            b_vis: vec![0.0; visible],
            a_hid: vec![0.0; hidden],
        }
    }

    pub fn from_parts(w: Matrix, b_vis: Vec<f64>, a_hid: Vec<f64>) -> Result<Self> {
        check_len("visible biases", b_vis.len(), w.rows())?;
        check_len("hidden biases", a_hid.len(), w.cols())?;
        let m = Rbm { w, b_vis, a_hid };
        m.check_finite()?;
        Ok(m)
    }

    /// Gaussian weights with standard deviation [`INIT_WEIGHT_STD`], zero biases.
    pub fn init_random(visible: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self::init_gaussian(visible, hidden, INIT_WEIGHT_STD, rng)
    }

    pub fn init_gaussian(visible: usize, hidden: usize, std: f64, rng: &mut Rng) -> Self {
        let w = Matrix::from_fn(visible, hidden, |_, _| std * rng.gaussian());
        Rbm {
            w,
            b_vis: vec![0.0; visible],
            a_hid: vec![0.0; hidden],
        }
    }

    pub fn visible(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.b_vis
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.a_hid
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn visible_bias_mut(&mut self) -> &mut [f64] {
        &mut self.b_vis
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [f64] {
        &mut self.a_hid
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.w.is_finite()
            && self.b_vis.iter().all(|v| v.is_finite())
            && self.a_hid.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite RBM parameter".into()))
        }
    }

    /// `E(x, h) = -xᵀWh - bᵀx - aᵀh`.
    pub fn energy(&self, x: &[f64], h: &[f64]) -> Result<f64> {
        check_len("energy visible vector", x.len(), self.visible())?;
        check_len("energy hidden vector", h.len(), self.hidden())?;
        let wh = self.w.mul_vec(h)?;
        Ok(-dot(x, &wh) - dot(&self.b_vis, x) - dot(&self.a_hid, h))
    }

    /// `p(h_j = 1 | x) = σ(a_j + Σ_i x_i w_ij)`.
    pub fn prob_h_given_x(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("visible vector", x.len(), self.visible())?;
        let mut z = self.w.vec_mul(x)?;
        z.iter_mut()
            .zip(&self.a_hid)
            .for_each(|(z, a)| *z = sigmoid(*z + a));
        Ok(z)
    }

    /// `p(x_i = 1 | h) = σ(b_i + Σ_j h_j w_ij)`.
    pub fn prob_x_given_h(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len("hidden vector", h.len(), self.hidden())?;
        let mut z = self.w.mul_vec(h)?;
        z.iter_mut()
            .zip(&self.b_vis)
            .for_each(|(z, b)| *z = sigmoid(*z + b));
        Ok(z)
    }

    /// Row-wise `p(h = 1 | x)` for a `L × visible` batch.
    pub fn hidden_probs(&self, batch: &Matrix) -> Result<Matrix> {
        ensure!(
            batch.cols() == self.visible(),
            Contract,
            "batch has {} columns but the model has {} visible units",
            batch.cols(),
            self.visible()
        );
        affine_sigmoid(batch, &self.w, &self.a_hid)
    }

    /// Row-wise `p(x = 1 | h)` for a `L × hidden` batch.
    pub fn visible_probs(&self, hidden: &Matrix) -> Result<Matrix> {
        ensure!(
            hidden.cols() == self.hidden(),
            Contract,
            "hidden batch has {} columns but the model has {} hidden units",
            hidden.cols(),
            self.hidden()
        );
        affine_sigmoid(hidden, &self.w.transpose(), &self.b_vis)
    }

    /// Runs `k` alternating Gibbs steps from `x0`, drawing from `rng`.
    pub fn gibbs_chain(&self, x0: &[f64], k: usize, rng: &mut Rng) -> Result<GibbsSample> {
        check_len("chain start", x0.len(), self.visible())?;
        let batch = Matrix::from_vec(1, x0.len(), x0.to_vec())?;
        let out = self.gibbs_batch(&batch, k, std::slice::from_mut(rng))?;
        Ok(GibbsSample {
            x_tilde: out.x_tilde.into_vec(),
            h0_probs: out.h0.into_vec(),
            h_tilde_probs: out.h_tilde.into_vec(),
        })
    }

    /// One chain per batch row; row `l` draws only from `streams[l]`.
    pub(crate) fn gibbs_batch(
        &self,
        batch: &Matrix,
        k: usize,
        streams: &mut [Rng],
    ) -> Result<GibbsBatch> {
        ensure!(k >= 1, Contract, "Gibbs chain length must be at least 1");
        ensure!(
            streams.len() == batch.rows(),
            Contract,
            "{} random streams for {} chains",
            streams.len(),
            batch.rows()
        );
        let wt = self.w.transpose();
        let h0 = self.hidden_probs(batch)?;
        let mut h_probs = h0.clone();
        let mut x_probs = Matrix::zeros(0, 0);
        for step in 1..=k {
            let h_sample = sample_rows(&h_probs, streams);
            x_probs = affine_sigmoid(&h_sample, &wt, &self.b_vis)?;
            let x_next = if step < k {
                sample_rows(&x_probs, streams)
            } else {
                x_probs.clone()
            };
            h_probs = affine_sigmoid(&x_next, &self.w, &self.a_hid)?;
        }
        Ok(GibbsBatch {
            h0,
            x_tilde: x_probs,
            h_tilde: h_probs,
        })
    }

    /// CD-k statistics for a `L × visible` batch. Draws one word from `rng`
    /// and gives each row its own child stream.
    pub fn cd_step(&self, batch: &Matrix, k: usize, rng: &mut Rng) -> Result<CdStats> {
        let mut streams = rng.split(batch.rows());
        self.cd_step_with_streams(batch, k, &mut streams)
    }

    /// CD-k statistics with caller-supplied per-row streams.
    pub fn cd_step_with_streams(
        &self,
        batch: &Matrix,
        k: usize,
        streams: &mut [Rng],
    ) -> Result<CdStats> {
        Ok(self.cd_step_detailed(batch, k, streams)?.0)
    }

    pub(crate) fn cd_step_detailed(
        &self,
        batch: &Matrix,
        k: usize,
        streams: &mut [Rng],
    ) -> Result<(CdStats, GibbsBatch)> {
        ensure!(batch.rows() > 0, Contract, "empty batch");
        let chain = self.gibbs_batch(batch, k, streams)?;
        let l = batch.rows() as f64;
        let mut dw = batch.t_matmul(&chain.h0)?;
        let neg = chain.x_tilde.t_matmul(&chain.h_tilde)?;
        dw.add_scaled(-1.0, &neg)?;
        dw.scale_in_place(1.0 / l);
        let db_vis = mean_difference(batch, &chain.x_tilde);
        let da_hid = mean_difference(&chain.h0, &chain.h_tilde);
        Ok((
            CdStats {
                dw,
                db_vis,
                da_hid,
                batch_size: batch.rows(),
            },
            chain,
        ))
    }

    /// `velocity ← momentum·velocity + lr·stats; θ ← θ + velocity`.
    pub fn apply_update(
        &mut self,
        stats: &CdStats,
        lr: f64,
        momentum: f64,
        velocity: &mut Velocity,
    ) -> Result<()> {
        ensure!(lr > 0.0, Contract, "learning rate {lr} must be positive");
        ensure!(
            (0.0..1.0).contains(&momentum),
            Contract,
            "momentum {momentum} must lie in [0, 1)"
        );
        ensure!(
            stats.dw.shape() == self.w.shape()
                && velocity.dw.shape() == self.w.shape()
                && stats.db_vis.len() == self.visible()
                && velocity.db_vis.len() == self.visible()
                && stats.da_hid.len() == self.hidden()
                && velocity.da_hid.len() == self.hidden(),
            Contract,
            "update shapes do not match a {}x{} model",
            self.visible(),
            self.hidden()
        );
        if !(stats.dw.is_finite()
            && stats.db_vis.iter().all(|v| v.is_finite())
            && stats.da_hid.iter().all(|v| v.is_finite()))
        {
            return Err(Error::Numeric("non-finite gradient statistics".into()));
        }
        velocity.dw.scale_in_place(momentum);
        velocity.dw.add_scaled(lr, &stats.dw)?;
        self.w.add_scaled(1.0, &velocity.dw)?;
        momentum_step(
            &mut self.b_vis,
            &mut velocity.db_vis,
            &stats.db_vis,
            lr,
            momentum,
        );
        momentum_step(
            &mut self.a_hid,
            &mut velocity.da_hid,
            &stats.da_hid,
            lr,
            momentum,
        );
        self.check_finite()
    }
}

impl Velocity {
    pub fn zeros_like(m: &Rbm) -> Self {
        Velocity {
            dw: Matrix::zeros(m.visible(), m.hidden()),
            db_vis: vec![0.0; m.visible()],
            da_hid: vec![0.0; m.hidden()],
        }
    }
}

impl CdStats {
    pub fn zeros_like(m: &Rbm) -> Self {
        CdStats {
            dw: Matrix::zeros(m.visible(), m.hidden()),
            db_vis: vec![0.0; m.visible()],
            da_hid: vec![0.0; m.hidden()],
            batch_size: 0,
        }
    }
}

fn momentum_step(param: &mut [f64], vel: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
        *v = momentum * *v + lr * g;
        *p += *v;
    }
}

fn mean_difference(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let n = a.rows() as f64;
    a.column_sums()
        .into_iter()
        .zip(b.column_sums())
        .map(|(x, y)| (x - y) / n)
        .collect()
}

fn sample_rows(probs: &Matrix, streams: &mut [Rng]) -> Matrix {
    let mut out = probs.clone();
    for (l, rng) in streams.iter_mut().enumerate() {
        for v in out.row_mut(l) {
            *v = rng.bernoulli_unchecked(*v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(visible: usize, hidden: usize, seed: u64) -> Rbm {
        let mut rng = Rng::new(seed);
        let mut m = Rbm::init_gaussian(visible, hidden, 1.0, &mut rng);
        m.b_vis.iter_mut().for_each(|b| *b = rng.gaussian());
        m.a_hid.iter_mut().for_each(|a| *a = rng.gaussian());
        m
    }

    #[test]
    fn energy_cases() {
        let m = random_model(3, 2, 1);
        assert_eq!(m.energy(&[0.0; 3], &[0.0; 2]).unwrap(), 0.0);
        let z = Rbm::zeros(3, 2);
        assert_eq!(z.energy(&[1.0, 0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        let w = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let m = Rbm::from_parts(w, vec![0.0, 0.0], vec![3.0]).unwrap();
        assert_eq!(m.energy(&[1.0, 1.0], &[1.0]).unwrap(), -6.0);
        assert!(m.energy(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn conditionals_zero_and_saturated() {
        let z = Rbm::zeros(4, 3);
        assert_eq!(
            z.prob_h_given_x(&[1.0, 0.0, 1.0, 0.5]).unwrap(),
            vec![0.5; 3]
        );
        assert_eq!(z.prob_x_given_h(&[1.0, 0.0, 1.0]).unwrap(), vec![0.5; 4]);
        let mut m = Rbm::zeros(4, 3);
        m.a_hid = vec![-40.0; 3];
        m.b_vis = vec![-40.0; 4];
        assert!(m
            .prob_h_given_x(&[1.0; 4])
            .unwrap()
            .iter()
            .all(|&p| p < 1e-15));
        assert!(m
            .prob_x_given_h(&[1.0; 3])
            .unwrap()
            .iter()
            .all(|&p| p < 1e-15));
        assert!(m.prob_h_given_x(&[1.0; 3]).is_err());
        assert!(m.prob_x_given_h(&[1.0; 4]).is_err());
    }

    #[test]
    fn conditionals_match_scalar_loops() {
        let m = random_model(5, 4, 8);
        let x = [0.2, 1.0, 0.0, 0.7, 0.4];
        let h = [1.0, 0.0, 0.3, 1.0];
        let ph = m.prob_h_given_x(&x).unwrap();
        for j in 0..4 {
            let mut z = m.a_hid[j];
            for i in 0..5 {
                z += x[i] * m.w.get(i, j);
            }
            assert!((ph[j] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        }
        let px = m.prob_x_given_h(&h).unwrap();
        for i in 0..5 {
            let mut z = m.b_vis[i];
            for j in 0..4 {
                z += h[j] * m.w.get(i, j);
            }
            assert!((px[i] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        }
        let batch = Matrix::from_rows(&[x.to_vec(), x.to_vec()]).unwrap();
        let hb = m.hidden_probs(&batch).unwrap();
        assert!(hb
            .row(1)
            .iter()
            .zip(&ph)
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn gibbs_on_zero_model_is_half() {
        let z = Rbm::zeros(3, 2);
        let mut rng = Rng::new(4);
        let s = z.gibbs_chain(&[1.0, 0.0, 1.0], 1, &mut rng).unwrap();
        assert_eq!(s.h0_probs, vec![0.5; 2]);
        assert_eq!(s.x_tilde, vec![0.5; 3]);
        assert_eq!(s.h_tilde_probs, vec![0.5; 2]);
        assert!(z.gibbs_chain(&[1.0, 0.0, 1.0], 0, &mut rng).is_err());
    }

    #[test]
    fn gibbs_is_deterministic_under_seed() {
        let m = random_model(6, 4, 2);
        let x = [1.0, 0.0, 1.0, 1.0, 0.0, 0.5];
        let a = m.gibbs_chain(&x, 3, &mut Rng::new(10)).unwrap();
        let b = m.gibbs_chain(&x, 3, &mut Rng::new(10)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cd_on_zero_model_is_zero_in_expectation() {
        let z = Rbm::zeros(4, 3);
        let batch = Matrix::from_rows(&vec![vec![0.5; 4]; 10]).unwrap();
        let stats = z.cd_step(&batch, 1, &mut Rng::new(3)).unwrap();
        // x̃ = 0.5 = x and both hidden responses are 0.5 regardless of samples
        assert!(stats.dw.frobenius_norm() < 1e-15);
        assert!(stats.db_vis.iter().all(|v| v.abs() < 1e-15));
        assert!(stats.da_hid.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn duplicated_sample_averages_per_sample_stats() {
        let m = random_model(5, 3, 21);
        let x = vec![1.0, 0.0, 0.3, 1.0, 0.8];
        let batch = Matrix::from_rows(&[x.clone(), x.clone()]).unwrap();
        let mut rng = Rng::new(99);
        let pair = m.cd_step(&batch, 1, &mut rng.clone()).unwrap();

        let mut streams = rng.split(2);
        let single = Matrix::from_rows(&[x]).unwrap();
        let s0 = m
            .cd_step_with_streams(&single, 1, std::slice::from_mut(&mut streams[0]))
            .unwrap();
        let s1 = m
            .cd_step_with_streams(&single, 1, std::slice::from_mut(&mut streams[1]))
            .unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let avg = 0.5 * (s0.dw.get(i, j) + s1.dw.get(i, j));
                assert!((pair.dw.get(i, j) - avg).abs() < 1e-14);
            }
            let avg = 0.5 * (s0.db_vis[i] + s1.db_vis[i]);
            assert!((pair.db_vis[i] - avg).abs() < 1e-14);
        }
        for j in 0..3 {
            let avg = 0.5 * (s0.da_hid[j] + s1.da_hid[j]);
            assert!((pair.da_hid[j] - avg).abs() < 1e-14);
        }
        assert_eq!(pair.batch_size, 2);
    }

    #[test]
    fn cd_rejects_wrong_width() {
        let m = Rbm::zeros(4, 2);
        let batch = Matrix::zeros(3, 5);
        assert!(matches!(
            m.cd_step(&batch, 1, &mut Rng::new(0)),
            Err(Error::Contract(_))
        ));
    }

    fn constant_stats(m: &Rbm, g: f64) -> CdStats {
        CdStats {
            dw: Matrix::filled(m.visible(), m.hidden(), g),
            db_vis: vec![g; m.visible()],
            da_hid: vec![g; m.hidden()],
            batch_size: 1,
        }
    }

    #[test]
    fn apply_update_plain_and_zero() {
        let mut m = random_model(3, 2, 5);
        let before = m.clone();
        let mut vel = Velocity::zeros_like(&m);
        m.apply_update(&constant_stats(&m, 0.0), 0.3, 0.9, &mut vel)
            .unwrap();
        assert_eq!(m, before);

        let stats = constant_stats(&m, 0.25);
        let mut vel = Velocity::zeros_like(&m);
        m.apply_update(&stats, 1.0, 0.0, &mut vel).unwrap();
        let diff = m.w.sub(&before.w).unwrap();
        assert!(diff.as_slice().iter().all(|&d| (d - 0.25).abs() < 1e-15));
    }

    #[test]
    fn apply_update_momentum_recurrence() {
        // v1 = lr g, v2 = 0.5 lr g + lr g = 1.5 lr g, total 2.5 lr g
        let mut m = Rbm::zeros(2, 2);
        let g = 0.4;
        let lr = 0.1;
        let stats = constant_stats(&m, g);
        let mut vel = Velocity::zeros_like(&m);
        m.apply_update(&stats, lr, 0.5, &mut vel).unwrap();
        assert!((m.w.get(0, 0) - lr * g).abs() < 1e-15);
        m.apply_update(&stats, lr, 0.5, &mut vel).unwrap();
        assert!((vel.dw.get(1, 1) - 1.5 * lr * g).abs() < 1e-15);
        assert!((m.w.get(1, 1) - 2.5 * lr * g).abs() < 1e-15);
        assert!((m.a_hid[0] - 2.5 * lr * g).abs() < 1e-15);
        assert!((m.b_vis[1] - 2.5 * lr * g).abs() < 1e-15);
    }

    #[test]
    fn apply_update_validates() {
        let mut m = Rbm::zeros(2, 2);
        let stats = constant_stats(&m, 1.0);
        let mut vel = Velocity::zeros_like(&m);
        assert!(m.apply_update(&stats, 0.0, 0.5, &mut vel).is_err());
        assert!(m.apply_update(&stats, 0.1, 1.0, &mut vel).is_err());
        let bad = constant_stats(&Rbm::zeros(3, 2), 1.0);
        assert!(m.apply_update(&bad, 0.1, 0.0, &mut vel).is_err());
        let nan = constant_stats(&m, f64::NAN);
        assert!(matches!(
            m.apply_update(&nan, 0.1, 0.0, &mut vel),
            Err(Error::Numeric(_))
        ));
    }
}
