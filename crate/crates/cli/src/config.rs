//! Run configuration. Every field has a default; the fully resolved config
//! is what gets written to `manifest.json`, so a run can be replayed from
//! its manifest alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mndbn_core::data::FRAME_SIDE;
use mndbn_core::finetune::Optimizer;
use mndbn_core::{
    load_idx, load_usps, Dataset, FineTuneParams, GroupPartition, PenaltyConfig, Split, TrainParams,
};

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Plain-text USPS lines.
    Usps,
    /// IDX image/label pair.
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPaths {
    pub images: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub format: DataFormat,
    pub train: SplitPaths,
    #[serde(default)]
    pub test: Option<SplitPaths>,
    /// Use only the first N training images.
    #[serde(default)]
    pub train_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyBlock {
    pub lambda: f64,
    pub group_size: usize,
    /// Overlap between neighbouring groups in percent; 0 gives disjoint groups.
    #[serde(default)]
    pub overlap_pct: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    mndbn_core::mixed_norm::DEFAULT_EPSILON
}

impl Default for PenaltyBlock {
    fn default() -> Self {
        PenaltyBlock {
            lambda: 0.1,
            group_size: 20,
            overlap_pct: 0.0,
            epsilon: default_epsilon(),
        }
    }
}

impl PenaltyBlock {
    pub fn resolve(&self, layer: usize, hidden: usize) -> CliResult<PenaltyConfig> {
        let ctx = |e: mndbn_core::Error| CliError::Config(format!("penalty[{layer}]: {e}"));
        if !(0.0..100.0).contains(&self.overlap_pct) {
            return Err(CliError::Config(format!(
                "penalty[{layer}].overlap_pct must lie in [0, 100), got {}",
                self.overlap_pct
            )));
        }
        let part =
            GroupPartition::new(hidden, self.group_size, self.overlap_pct / 100.0).map_err(ctx)?;
        PenaltyConfig::with_epsilon(self.lambda, part, self.epsilon).map_err(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub cd_k: usize,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let p = TrainParams::default();
        TrainBlock {
            learning_rate: p.learning_rate,
            initial_momentum: p.initial_momentum,
            final_momentum: p.final_momentum,
            momentum_switch_epoch: p.momentum_switch_epoch,
            batch_size: p.batch_size,
            epochs: p.epochs,
            cd_k: p.cd_k,
        }
    }
}

impl TrainBlock {
    pub fn params(&self) -> CliResult<TrainParams> {
        let p = TrainParams {
            learning_rate: self.learning_rate,
            initial_momentum: self.initial_momentum,
            final_momentum: self.final_momentum,
            momentum_switch_epoch: self.momentum_switch_epoch,
            batch_size: self.batch_size,
            epochs: self.epochs,
            cd_k: self.cd_k,
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineTuneBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub iterations_per_batch: usize,
    pub head_warmup_epochs: usize,
    pub head_only: bool,
    pub optimizer: Optimizer,
}

impl Default for FineTuneBlock {
    fn default() -> Self {
        let p = FineTuneParams::default();
        FineTuneBlock {
            epochs: p.epochs,
            batch_size: p.batch_size,
            iterations_per_batch: p.iterations_per_batch,
            head_warmup_epochs: p.head_warmup_epochs,
            head_only: p.head_only,
            optimizer: p.optimizer,
        }
    }
}

impl FineTuneBlock {
    pub fn params(&self) -> CliResult<FineTuneParams> {
        let p = FineTuneParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            iterations_per_batch: self.iterations_per_batch,
            head_warmup_epochs: self.head_warmup_epochs,
            head_only: self.head_only,
            optimizer: self.optimizer,
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("finetune: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportBlock {
    pub histogram_bins: usize,
    pub density_bins: usize,
    /// Training images used for activation histograms.
    pub samples: usize,
    /// Upper bound on tiles drawn per model.
    pub max_tiles: usize,
}

impl Default for ReportBlock {
    fn default() -> Self {
        ReportBlock {
            histogram_bins: 20,
            density_bins: 50,
            samples: 1000,
            max_tiles: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    /// Input model for `finetune` and `evaluate`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Single-layer shorthand for `train-rbm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_size: Option<usize>,
    #[serde(default)]
    pub layer_sizes: Vec<usize>,
    #[serde(default = "default_penalty")]
    pub penalty: OneOrMany<PenaltyBlock>,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub finetune: FineTuneBlock,
    #[serde(default)]
    pub report: ReportBlock,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_penalty() -> OneOrMany<PenaltyBlock> {
    OneOrMany::One(PenaltyBlock::default())
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: None,
            model: None,
            layer_size: None,
            layer_sizes: Vec::new(),
            penalty: default_penalty(),
            train: TrainBlock::default(),
            finetune: FineTuneBlock::default(),
            report: ReportBlock::default(),
            out_dir: None,
            threads: None,
        }
    }
}

/// Reads a config file or a previous run's `manifest.json`.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("command") && obj.contains_key("config") {
            value = obj.remove("config").unwrap();
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Folds the shorthand fields into their canonical form.
    pub fn normalize(&mut self) -> CliResult<()> {
        if let Some(size) = self.layer_size.take() {
            if !self.layer_sizes.is_empty() && self.layer_sizes != [size] {
                return Err(CliError::Config(
                    "layer_size and layer_sizes disagree; give only one".into(),
                ));
            }
            self.layer_sizes = vec![size];
        }
        if self.layer_sizes.contains(&0) {
            return Err(CliError::Config(
                "layer_sizes: sizes must be positive".into(),
            ));
        }
        if let OneOrMany::One(block) = &self.penalty {
            let n = self.layer_sizes.len().max(1);
            self.penalty = OneOrMany::Many(vec![block.clone(); n]);
        }
        Ok(())
    }

    pub fn penalties(&self) -> CliResult<Vec<PenaltyConfig>> {
        let blocks = match &self.penalty {
            OneOrMany::One(b) => vec![b.clone(); self.layer_sizes.len()],
            OneOrMany::Many(v) => v.clone(),
        };
        if blocks.len() != self.layer_sizes.len() {
            return Err(CliError::Config(format!(
                "penalty: {} blocks for {} layers",
                blocks.len(),
                self.layer_sizes.len()
            )));
        }
        blocks
            .iter()
            .zip(&self.layer_sizes)
            .enumerate()
            .map(|(l, (b, &size))| b.resolve(l, size))
            .collect()
    }

    pub fn dataset(&self) -> CliResult<&DatasetConfig> {
        self.dataset
            .as_ref()
            .ok_or_else(|| CliError::Config("dataset: missing".into()))
    }

    /// Config as stored in model headers: no output location or thread count.
    pub fn portable(&self) -> Value {
        let mut c = self.clone();
        c.out_dir = None;
        c.threads = None;
        serde_json::to_value(c).expect("config serializes")
    }
}

fn load_split(cfg: &DatasetConfig, paths: &SplitPaths, split: Split) -> CliResult<Dataset> {
    let mut ds = match cfg.format {
        DataFormat::Usps => load_usps(&paths.images, split)?,
        DataFormat::Idx => {
            let labels = paths.labels.as_ref().ok_or_else(|| {
                CliError::Config(
                    format!("dataset.{split:?}.labels is required for idx data").to_lowercase(),
                )
            })?;
            let mut ds = load_idx(&paths.images, labels)?;
            ds.split = split;
            ds.resized(FRAME_SIDE)?
        }
    };
    ds.name = cfg.name.clone();
    Ok(ds)
}

pub fn load_train(cfg: &DatasetConfig) -> CliResult<Dataset> {
    let ds = load_split(cfg, &cfg.train, Split::Train)?;
    Ok(match cfg.train_limit {
        Some(n) => ds.take(n),
        None => ds,
    })
}

pub fn load_test(cfg: &DatasetConfig) -> CliResult<Option<Dataset>> {
    cfg.test
        .as_ref()
        .map(|p| load_split(cfg, p, Split::Test))
        .transpose()
}

/// Every file a dataset config reads.
pub fn input_files(cfg: &DatasetConfig) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in std::iter::once(&cfg.train).chain(cfg.test.as_ref()) {
        out.push(p.images.clone());
        out.extend(p.labels.clone());
    }
    out
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}
