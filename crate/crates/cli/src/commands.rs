use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mndbn_core::dbn::Evaluation;
use mndbn_core::model_io;
use mndbn_core::report::{
    activation_density, activation_histogram, architecture_tag, results_table_csv,
    results_table_text, square_grid, weight_tiles, RunRecord,
};
use mndbn_core::{fine_tune, pretrain_greedy, train_mnrbm, Dbn, Matrix, Rng};

use crate::config::{ensure_dir, input_files, load_test, load_train, RunConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::manifest::{hash_file, ArtifactWriter, Manifest};

pub const MODEL_FILE: &str = "model.mndbn";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TrainRbm,
    PretrainDbn,
    Finetune,
    Evaluate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainRbm => "train-rbm",
            Command::PretrainDbn => "pretrain-dbn",
            Command::Finetune => "finetune",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub architecture: String,
    pub dataset: String,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

impl Metrics {
    fn headline(&self) -> Option<f64> {
        self.test_accuracy.or(self.train_accuracy)
    }
}

struct Run<'a> {
    command: Command,
    cfg: &'a RunConfig,
    out: PathBuf,
    writer: ArtifactWriter,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl<'a> Run<'a> {
    fn start(command: Command, cfg: &'a RunConfig, out: &Path) -> CliResult<Self> {
        ensure_dir(out)?;
        Ok(Run {
            command,
            cfg,
            out: out.to_path_buf(),
            writer: ArtifactWriter::new(out),
            inputs: Vec::new(),
            started: Instant::now(),
        })
    }

    fn header(&self) -> Value {
        json!({"command": self.command.name(), "config": self.cfg.portable()})
    }

    fn finish(self) -> CliResult<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| hash_file(p))
            .collect::<CliResult<Vec<_>>>()?;
        Manifest {
            command: self.command.name().to_string(),
            config: self.cfg.clone(),
            seed: self.cfg.seed,
            inputs,
            artifacts: self.writer.written,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
        .write(&self.out)
    }
}

fn architecture_of(dbn: &Dbn) -> String {
    dbn.layer_configs
        .iter()
        .find(|c| c.lambda > 0.0)
        .map(|c| {
            architecture_tag(
                c.lambda,
                c.partition.group_size(),
                c.partition.overlap_fraction(),
            )
        })
        .unwrap_or_else(|| "DBN".to_string())
}

fn confusion_csv(eval: &Evaluation) -> String {
    let k = eval.confusion.rows();
    let mut out = String::from("true\\predicted");
    for c in 0..k {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for r in 0..k {
        out.push_str(&r.to_string());
        for c in 0..k {
            out.push_str(&format!(",{}", eval.confusion.get(r, c) as u64));
        }
        out.push('\n');
    }
    out
}

fn model_path(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.model.as_deref().ok_or_else(|| {
        CliError::Config("model: no input model given (--model or config.model)".into())
    })
}

pub fn train_rbm(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds_cfg = cfg.dataset()?;
    if cfg.layer_sizes.len() != 1 {
        return Err(CliError::Config(format!(
            "layer_size: train-rbm trains exactly one layer, got {}",
            cfg.layer_sizes.len()
        )));
    }
    let penalty = cfg.penalties()?.remove(0);
    let params = cfg.train.params()?;
    let mut run = Run::start(Command::TrainRbm, cfg, out)?;
    let train = load_train(ds_cfg)?;
    run.inputs = input_files(ds_cfg);
    let mut rng = Rng::new(cfg.seed);
    let (rbm, log) = train_mnrbm(
        train.images(),
        cfg.layer_sizes[0],
        &penalty,
        &params,
        &mut rng,
    )?;
    let bytes = model_io::rbm_to_bytes(&rbm, &penalty, run.header())?;
    run.writer.write(MODEL_FILE, &bytes)?;
    run.writer.write("train_log.csv", log.to_csv().as_bytes())?;
    run.finish()
}

pub fn pretrain_dbn(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds_cfg = cfg.dataset()?;
    if cfg.layer_sizes.is_empty() {
        return Err(CliError::Config(
            "layer_sizes: at least one layer is required".into(),
        ));
    }
    let penalties = cfg.penalties()?;
    let params = cfg.train.params()?;
    let mut run = Run::start(Command::PretrainDbn, cfg, out)?;
    let train = load_train(ds_cfg)?;
    run.inputs = input_files(ds_cfg);
    let mut rng = Rng::new(cfg.seed);
    let (dbn, logs) = pretrain_greedy(
        train.images(),
        &cfg.layer_sizes,
        &penalties,
        &params,
        &mut rng,
    )?;
    let bytes = model_io::dbn_to_bytes(&dbn, run.header())?;
    run.writer.write(MODEL_FILE, &bytes)?;
    for (l, log) in logs.iter().enumerate() {
        run.writer
            .write(&format!("layer{}_log.csv", l + 1), log.to_csv().as_bytes())?;
    }
    run.finish()
}

pub fn finetune(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds_cfg = cfg.dataset()?;
    let params = cfg.finetune.params()?;
    let model = model_path(cfg)?;
    let mut run = Run::start(Command::Finetune, cfg, out)?;
    let mut dbn = model_io::load(model)?.dbn;
    let train = load_train(ds_cfg)?;
    let test = load_test(ds_cfg)?;
    run.inputs = input_files(ds_cfg);
    run.inputs.push(model.to_path_buf());
    if train.images().cols() != dbn.input_size() {
        return Err(CliError::Config(format!(
            "dataset has {} pixels per image but the model expects {}",
            train.images().cols(),
            dbn.input_size()
        )));
    }
    if dbn.head.is_none() {
        dbn.attach_head(mndbn_core::data::NUM_CLASSES);
    }
    let mut rng = Rng::new(cfg.seed);
    let log = fine_tune(&mut dbn, &train, test.as_ref(), &params, &mut rng)?;
    let train_eval = dbn.evaluate(&train)?;
    let test_eval = test.as_ref().map(|t| dbn.evaluate(t)).transpose()?;
    let metrics = Metrics {
        architecture: architecture_of(&dbn),
        dataset: ds_cfg.name.clone(),
        train_accuracy: Some(train_eval.accuracy),
        test_accuracy: test_eval.as_ref().map(|e| e.accuracy),
    };
    run.writer
        .write(MODEL_FILE, &model_io::dbn_to_bytes(&dbn, run.header())?)?;
    run.writer
        .write("finetune_log.csv", log.to_csv().as_bytes())?;
    write_metrics(
        &mut run,
        &metrics,
        test_eval.as_ref().unwrap_or(&train_eval),
    )?;
    run.finish()
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds_cfg = cfg.dataset()?;
    let model = model_path(cfg)?;
    let mut run = Run::start(Command::Evaluate, cfg, out)?;
    let dbn = model_io::load(model)?.dbn;
    let test = match load_test(ds_cfg)? {
        Some(t) => t,
        None => load_train(ds_cfg)?,
    };
    run.inputs = input_files(ds_cfg);
    run.inputs.push(model.to_path_buf());
    let eval = dbn.evaluate(&test)?;
    let metrics = Metrics {
        architecture: architecture_of(&dbn),
        dataset: ds_cfg.name.clone(),
        train_accuracy: None,
        test_accuracy: Some(eval.accuracy),
    };
    write_metrics(&mut run, &metrics, &eval)?;
    run.finish()
}

fn write_metrics(run: &mut Run, metrics: &Metrics, eval: &Evaluation) -> CliResult<()> {
    let text = serde_json::to_string_pretty(metrics).expect("metrics serialize") + "\n";
    run.writer.write(METRICS_FILE, text.as_bytes())?;
    run.writer
        .write("confusion.csv", confusion_csv(eval).as_bytes())?;
    Ok(())
}

/// Directories under `root` (including itself) holding a model file, in
/// sorted order; the report output directory is skipped.
fn model_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(MODEL_FILE).is_file() {
            found.push(dir.clone());
        }
        let entries = fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| io_err(&dir, e))?.path();
            if path.is_dir() && !(dir == root && path.file_name() == Some(REPORT_DIR.as_ref())) {
                stack.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn tag_for(root: &Path, dir: &Path) -> String {
    let rel = dir.strip_prefix(root).unwrap_or(dir);
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.is_empty() {
        "run".to_string()
    } else {
        parts.join("_")
    }
}

/// Wall time of the run in `dir` plus the runs that produced its input model.
fn chained_wall_seconds(dir: &Path) -> f64 {
    let mut total = 0.0;
    let mut current = dir.to_path_buf();
    for _ in 0..16 {
        let Some(m) = Manifest::read(&current) else {
            break;
        };
        total += m.wall_seconds;
        match m.config.model.as_ref().and_then(|p| p.parent()) {
            Some(parent) if parent != current => current = parent.to_path_buf(),
            _ => break,
        }
    }
    total
}

pub fn report(cfg: &RunConfig, run_dir: &Path, out: &Path) -> CliResult<()> {
    if !run_dir.is_dir() {
        return Err(CliError::Data(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let dirs = model_dirs(run_dir)?;
    let mut run = Run::start(Command::Report, cfg, out)?;
    let mut missing = Vec::new();
    let mut records = Vec::new();
    let r = &cfg.report;
    for dir in &dirs {
        let tag = tag_for(run_dir, dir);
        let dbn = match model_io::load(&dir.join(MODEL_FILE)) {
            Ok(f) => f.dbn,
            Err(e) => {
                missing.push(format!("{tag}: unreadable model: {e}"));
                continue;
            }
        };
        run.inputs.push(dir.join(MODEL_FILE));
        let first = &dbn.layers[0];
        let grid = square_grid(first.hidden().min(r.max_tiles));
        match weight_tiles(first, grid, grid) {
            Ok(img) => {
                run.writer
                    .write(&format!("{tag}_weights.pgm"), &img.to_bytes())?;
            }
            Err(e) => missing.push(format!("{tag}: weight tiles: {e}")),
        }
        match sample_batch(dir, r.samples) {
            Ok(batch) => {
                let hist = activation_histogram(first, &batch, r.histogram_bins)?;
                run.writer
                    .write(&format!("{tag}_histogram.csv"), hist.to_csv().as_bytes())?;
                let dens = activation_density(first, &batch, r.density_bins)?;
                run.writer.write(
                    &format!("{tag}_density.csv"),
                    dens.to_density_csv().as_bytes(),
                )?;
            }
            Err(e) => missing.push(format!("{tag}: activation histogram: {e}")),
        }
        let metrics_path = dir.join(METRICS_FILE);
        if metrics_path.is_file() {
            let metrics: Option<Metrics> = fs::read_to_string(&metrics_path)
                .ok()
                .and_then(|t| serde_json::from_str(&t).ok());
            match metrics.as_ref().and_then(|m| m.headline().map(|a| (m, a))) {
                Some((m, accuracy)) => records.push(RunRecord {
                    architecture: m.architecture.clone(),
                    dataset: m.dataset.clone(),
                    accuracy,
                    wall_seconds: chained_wall_seconds(dir),
                }),
                None => missing.push(format!("{tag}: unreadable {METRICS_FILE}")),
            }
        }
    }
    run.writer
        .write("results.csv", results_table_csv(&records).as_bytes())?;
    run.writer
        .write("results.txt", results_table_text(&records).as_bytes())?;
    if !missing.is_empty() {
        run.writer
            .write("missing.txt", (missing.join("\n") + "\n").as_bytes())?;
    }
    run.finish()?;
    if dirs.is_empty() {
        return Err(CliError::Warning(format!(
            "no models found under {}",
            run_dir.display()
        )));
    }
    if !missing.is_empty() {
        return Err(CliError::Warning(format!(
            "missing artifacts:\n  {}",
            missing.join("\n  ")
        )));
    }
    Ok(())
}

/// First `n` training images of the dataset recorded in `dir`'s manifest.
fn sample_batch(dir: &Path, n: usize) -> CliResult<Matrix> {
    let manifest =
        Manifest::read(dir).ok_or_else(|| CliError::Data("no readable manifest.json".into()))?;
    let ds_cfg = manifest.config.dataset()?;
    let train = load_train(ds_cfg)?.take(n);
    if train.is_empty() {
        return Err(CliError::Data("training set is empty".into()));
    }
    Ok(train.images().clone())
}
