//! Deep belief networks: greedy layer-wise pre-training of (mixed-norm) RBMs,
//! the deterministic upward pass, and a softmax classification head.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::math::{check_len, Matrix};
use crate::mixed_norm::PenaltyConfig;
use crate::rbm::Rbm;
use crate::rng::Rng;
use crate::train::{train_mnrbm, TrainParams, TrainingLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLayer {
    /// `inputs × classes`
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl SoftmaxLayer {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        SoftmaxLayer {
            w_out: Matrix::zeros(inputs, classes),
            b_out: vec![0.0; classes],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_out.rows()
    }

    pub fn classes(&self) -> usize {
        self.w_out.cols()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let mut z = features.matmul(&self.w_out)?;
        z.add_row_vector(&self.b_out)?;
        Ok(z)
    }

    /// Row-wise softmax of the logits.
    pub fn probabilities(&self, features: &Matrix) -> Result<Matrix> {
        let mut z = self.logits(features)?;
        softmax_rows(&mut z);
        Ok(z)
    }
}

/// In-place, max-shifted softmax of every row.
pub fn softmax_rows(z: &mut Matrix) {
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dbn {
    pub layers: Vec<Rbm>,
    pub head: Option<SoftmaxLayer>,
    pub layer_configs: Vec<PenaltyConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Matrix,
}

impl Dbn {
    /// Checks the layer chain and the head dimensions.
    pub fn new(
        layers: Vec<Rbm>,
        head: Option<SoftmaxLayer>,
        layer_configs: Vec<PenaltyConfig>,
    ) -> Result<Self> {
        ensure!(!layers.is_empty(), Config, "a DBN needs at least one layer");
        ensure!(
            layer_configs.len() == layers.len(),
            Config,
            "{} penalty configs for {} layers",
            layer_configs.len(),
            layers.len()
        );
        for (l, pair) in layers.windows(2).enumerate() {
            ensure!(
                pair[1].visible() == pair[0].hidden(),
                Config,
                "layer {} has {} visible units but layer {} has {} hidden units",
                l + 1,
                pair[1].visible(),
                l,
                pair[0].hidden()
            );
        }
        for (l, (m, c)) in layers.iter().zip(&layer_configs).enumerate() {
            ensure!(
                c.partition.j_original() == m.hidden(),
                Config,
                "layer {l} partition covers {} units but the layer has {}",
                c.partition.j_original(),
                m.hidden()
            );
        }
        let top = layers.last().unwrap().hidden();
        if let Some(h) = &head {
            ensure!(
                h.inputs() == top && h.b_out.len() == h.classes(),
                Config,
                "softmax head expects {} inputs but the top layer has {top} units",
                h.inputs()
            );
        }
        Ok(Dbn {
            layers,
            head,
            layer_configs,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].visible()
    }

    pub fn top_size(&self) -> usize {
        self.layers.last().map_or(0, Rbm::hidden)
    }

    /// Replaces the head with a zero-initialized `classes`-way softmax.
    pub fn attach_head(&mut self, classes: usize) {
        self.head = Some(SoftmaxLayer::zeros(self.top_size(), classes));
    }

    fn head(&self) -> Result<&SoftmaxLayer> {
        self.head
            .as_ref()
            .ok_or_else(|| Error::State("the network has no softmax head".into()))
    }

    /// Mean-field upward pass; returns top-layer hidden probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("input vector", x.len(), self.input_size())?;
        let mut act = x.to_vec();
        for layer in &self.layers {
            act = layer.prob_h_given_x(&act)?;
        }
        Ok(act)
    }

    /// Upward pass for a batch, keeping every layer's activations
    /// (`out[0]` is the input, `out[L]` the top layer).
    pub fn forward_all(&self, batch: &Matrix) -> Result<Vec<Matrix>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.clone());
        for layer in &self.layers {
            let next = layer.hidden_probs(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward_batch(&self, batch: &Matrix) -> Result<Matrix> {
        let mut act = batch.clone();
        for layer in &self.layers {
            act = layer.hidden_probs(&act)?;
        }
        Ok(act)
    }

    pub fn softmax_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let head = self.head()?;
        let top = self.forward(x)?;
        Ok(head
            .probabilities(&Matrix::from_vec(1, top.len(), top)?)?
            .into_vec())
    }

    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        let head = self.head()?;
        head.probabilities(&self.forward_batch(batch)?)
    }

    /// Argmax class of each row.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let head = self.head()?;
        let logits = head.logits(&self.forward_batch(batch)?)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        ensure!(
            !data.is_empty(),
            Contract,
            "cannot evaluate on an empty dataset"
        );
        let classes = self.head()?.classes();
        if let Some(&bad) = data.labels().iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Contract(format!(
                "label {bad} outside the head's {classes} classes"
            )));
        }
        let predictions = self.predict(data.images())?;
        let mut confusion = Matrix::zeros(classes, classes);
        let mut correct = 0usize;
        for (&p, &y) in predictions.iter().zip(data.labels()) {
            let y = y as usize;
            confusion.set(y, p, confusion.get(y, p) + 1.0);
            correct += usize::from(p == y);
        }
        Ok(Evaluation {
            accuracy: correct as f64 / data.len() as f64,
            confusion,
        })
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Greedy layer-wise pre-training. Layer 0 trains on `data`; each later
/// layer trains on the hidden probabilities of the layer below, which is
/// never modified afterwards.
pub fn pretrain_greedy(
    data: &Matrix,
    layer_sizes: &[usize],
    configs: &[PenaltyConfig],
    params: &TrainParams,
    rng: &mut Rng,
) -> Result<(Dbn, Vec<TrainingLog>)> {
    let per_layer = vec![params.clone(); layer_sizes.len()];
    pretrain_greedy_with(data, layer_sizes, configs, &per_layer, rng)
}

/// As [`pretrain_greedy`], with separate training parameters per layer.
pub fn pretrain_greedy_with(
    data: &Matrix,
    layer_sizes: &[usize],
    configs: &[PenaltyConfig],
    params: &[TrainParams],
    rng: &mut Rng,
) -> Result<(Dbn, Vec<TrainingLog>)> {
    ensure!(!layer_sizes.is_empty(), Config, "layer_sizes is empty");
    ensure!(
        configs.len() == layer_sizes.len() && params.len() == layer_sizes.len(),
        Config,
        "{} layer sizes but {} penalty configs and {} parameter sets",
        layer_sizes.len(),
        configs.len(),
        params.len()
    );
    let mut layers = Vec::with_capacity(layer_sizes.len());
    let mut logs = Vec::with_capacity(layer_sizes.len());
    let mut inputs = data.clone();
    for (l, ((&size, cfg), p)) in layer_sizes.iter().zip(configs).zip(params).enumerate() {
        ensure!(
            cfg.partition.j_original() == size,
            Config,
            "layer {l}: partition covers {} units but layer size is {size}",
            cfg.partition.j_original()
        );
        let (rbm, log) = train_mnrbm(&inputs, size, cfg, p, rng)?;
        if l + 1 < layer_sizes.len() {
            inputs = rbm.hidden_probs(&inputs)?;
        }
        layers.push(rbm);
        logs.push(log);
    }
    Ok((Dbn::new(layers, None, configs.to_vec())?, logs))
}
