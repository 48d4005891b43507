//! End-to-end: pre-train, fine-tune, save, reload on a small separable task.

use mndbn_core::model_io;
use mndbn_core::{
    fine_tune, pretrain_greedy, Dataset, FineTuneParams, GroupPartition, Matrix, PenaltyConfig,
    Rng, Split, TrainParams,
};

/// Class `c` lights a distinct 4-pixel block of an 8×8 image, plus noise.
fn blocks(n: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = Rng::new(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let images = Matrix::from_fn(n, 64, |r, c| {
        let class = labels[r] as usize;
        let on = c / 6 == class;
        let base = if on { 0.9 } else { 0.05 };
        (base + 0.1 * rng.gaussian()).clamp(0.0, 1.0)
    });
    Dataset::new(images, labels, 8, 8, "blocks", split).unwrap()
}

#[test]
fn pretrain_finetune_round_trip() {
    let train = blocks(500, 1, Split::Train);
    let test = blocks(200, 2, Split::Test);
    let configs = vec![
        PenaltyConfig::new(0.1, GroupPartition::make_nonoverlapping(20, 5).unwrap()).unwrap(),
        PenaltyConfig::new(0.1, GroupPartition::make_overlapping(20, 4, 0.5).unwrap()).unwrap(),
    ];
    let params = TrainParams {
        epochs: 30,
        batch_size: 20,
        ..TrainParams::default()
    };
    let mut rng = Rng::new(3);
    let (mut dbn, logs) =
        pretrain_greedy(train.images(), &[20, 20], &configs, &params, &mut rng).unwrap();
    assert_eq!(logs.len(), 2);
    dbn.attach_head(10);
    let ft = FineTuneParams {
        epochs: 10,
        batch_size: 100,
        head_warmup_epochs: 2,
        ..FineTuneParams::default()
    };
    let log = fine_tune(&mut dbn, &train, Some(&test), &ft, &mut rng).unwrap();
    let acc = log.epochs.last().unwrap().test_accuracy.unwrap();
    assert!(acc > 0.9, "test accuracy {acc}");

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.mndbn");
    model_io::save_dbn(&path, &dbn, serde_json::json!({"seed": 3})).unwrap();
    let back = model_io::load(&path).unwrap();
    assert_eq!(back.dbn, dbn);
    assert_eq!(back.dbn.evaluate(&test).unwrap().accuracy, acc);
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}
