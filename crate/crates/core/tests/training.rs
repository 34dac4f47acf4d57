use mbfusion::krnet::{KrNet, NetworkConfig};
use mbfusion::signal::{MultibandConfig, Subband, SPEED_OF_LIGHT};
use mbfusion::training::{
    generate_dataset, generate_record, infer_fuse, mean_loss, write_dataset, Checkpoint, Dataset, DatasetSpec,
    PreparedSet, TrainConfig, Trainer,
};
use std::f64::consts::PI;

fn layout(n: usize, band: usize) -> MultibandConfig {
    let k = |f: f64| 2.0 * PI * f / SPEED_OF_LIGHT;
    MultibandConfig::new(
        k(60e9),
        k(62.5e6),
        n,
        vec![Subband { start: 0, len: band }, Subband { start: n - band, len: band }],
    )
    .unwrap()
}

fn spec(cfg: MultibandConfig, count: usize, seed: u64) -> DatasetSpec {
    let mut s = DatasetSpec::new(cfg, count, seed);
    s.nt_max = 3;
    s.snr_min_db = 30.0;
    s.snr_max_db = 30.0;
    s
}

#[test]
fn overfit_one_batch() {
    let set = PreparedSet::from_dataset(&generate_dataset(&spec(layout(8, 2), 32, 9)).unwrap()).unwrap();
    // Tiny layout with F = 8: at F = 2 the network cannot memorize 32
    // records (the loss stalls near 4x below its start).
    let net = KrNet::<f32>::new(NetworkConfig::new(8, 1, 3, 8), 4).unwrap();
    let cfg = TrainConfig {
        lr: 1e-2,
        batch: 32,
        ..TrainConfig::small()
    };
    let mut t = Trainer::new(net, cfg).unwrap();
    let idx: Vec<usize> = (0..32).collect();
    let first = t.step(&set, &idx).unwrap();
    for _ in 1..200 {
        t.step(&set, &idx).unwrap();
    }
    let last = mean_loss(&t.net, &set, 4).unwrap();
    assert!(last * 10.0 <= first, "loss {first} -> {last}");
}

#[test]
fn one_epoch_beats_initialization_and_logs_each_epoch() {
    let cfg = layout(32, 8);
    let train = PreparedSet::from_dataset(&generate_dataset(&spec(cfg.clone(), 256, 1)).unwrap()).unwrap();
    let val = PreparedSet::from_dataset(&generate_dataset(&spec(cfg, 256, 1).validation(64)).unwrap()).unwrap();
    let net = KrNet::<f32>::new(NetworkConfig::new(4, 1, 3, 32), 2).unwrap();
    let mut t = Trainer::new(
        net,
        TrainConfig {
            lr: 1e-3,
            batch: 16,
            epochs: 2,
            ..TrainConfig::small()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = t.fit(&train, &val, Some(dir.path())).unwrap();
    assert!(report.history.last().unwrap().val_loss < report.initial_val_loss);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(csv.lines().next().unwrap(), "epoch,train_loss,val_loss,seconds");
    let best = Checkpoint::load(&dir.path().join("best.krn")).unwrap();
    assert!(best.val_loss as f64 <= report.initial_val_loss);
    assert_eq!(best.network().unwrap().config(), t.net.config());
}

#[test]
fn dataset_file_round_trip_and_regeneration() {
    let s = spec(MultibandConfig::canonical(), 4, 21);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.mbf"), dir.path().join("b.mbf"));
    write_dataset(&s, &a).unwrap();
    write_dataset(&s, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = Dataset::load(&a).unwrap();
    assert_eq!(back.records.len(), 4);
    assert_eq!(back, generate_dataset(&s).unwrap());
    for (i, r) in back.records.iter().enumerate() {
        assert_eq!(r, &generate_record(&s, i as u64).unwrap());
    }
}

#[test]
fn inference_keeps_measured_samples() {
    let cfg = MultibandConfig::canonical();
    let net = KrNet::<f32>::new(NetworkConfig::new(2, 1, 3, 336), 0).unwrap();
    let rec = generate_record(&spec(cfg.clone(), 1, 3), 0).unwrap();
    let input = rec.input_signal();
    let fused = infer_fuse(&net, &input, &cfg, true).unwrap();
    assert_eq!(fused.len(), 336);
    for b in &cfg.subbands {
        assert_eq!(&fused.data[b.start..b.end()], &input.data[b.start..b.end()]);
    }
    let wrong = layout(32, 8);
    assert!(infer_fuse(&net, &input, &wrong, true).is_err());
}
