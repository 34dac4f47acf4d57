use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::prepare::PreparedSet;
use crate::error::{Error, Result};
use crate::io::write_bytes_atomic;
use crate::krnet::{loss_l1, loss_l1_grad, KrNet};

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Rescale the batch gradient to at most this L2 norm. Off by default.
    pub clip_norm: Option<f64>,
    /// Records per parallel gradient task.
    pub micro_batch: usize,
}

impl TrainConfig {
    /// Batch 1024, 50 epochs.
    pub fn paper() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 1024,
            epochs: 50,
            seed: 0,
            clip_norm: None,
            micro_batch: 2,
        }
    }

    /// Batch 256, 5 epochs.
    pub fn small() -> Self {
        Self {
            batch: 256,
            epochs: 5,
            ..Self::paper()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.batch == 0 || self.micro_batch == 0 {
            return Err(Error::Config("batch and micro_batch must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub initial_val_loss: f64,
    pub history: Vec<EpochLog>,
    /// Lowest-validation-loss state seen (epoch 0 is the initialization).
    pub best: Checkpoint,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,seconds`, one row per epoch.
    pub fn csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,seconds\n");
        for h in &self.history {
            let _ = writeln!(s, "{},{:.9e},{:.9e},{:.3}", h.epoch, h.train_loss, h.val_loss, h.seconds);
        }
        s
    }
}

/// Mean per-record L1 loss of `net` over `set`, in normalized space.
pub fn mean_loss(net: &KrNet<f32>, set: &PreparedSet, micro_batch: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let sums = idx
        .par_chunks(micro_batch.max(1))
        .map(|chunk| {
            let y = net.forward(&set.inputs(chunk))?;
            let l = loss_l1(&y, &set.labels(chunk))?;
            Ok(l as f64 * chunk.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / set.len().max(1) as f64)
}

/// Mean loss and gradient over `indices`. Micro-batches run in parallel
/// and are reduced in index order, so the result does not depend on the
/// thread count.
pub fn batch_gradient(
    net: &KrNet<f32>,
    set: &PreparedSet,
    indices: &[usize],
    micro_batch: usize,
) -> Result<(f64, Vec<f32>)> {
    let total = indices.len();
    if total == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let parts = indices
        .par_chunks(micro_batch.max(1))
        .map(|chunk| {
            let (y, tape) = net.forward_tape(&set.inputs(chunk))?;
            let (loss, mut gy) = loss_l1_grad(&y, &set.labels(chunk))?;
            // loss_l1 averages over the chunk; reweight to the full batch.
            let w = chunk.len() as f32 / total as f32;
            gy.scale(w);
            let mut grad = vec![0f32; net.param_count()];
            net.backward(tape, &gy, &mut grad)?;
            Ok((loss as f64 * chunk.len() as f64, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0f32; net.param_count()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss / total as f64, grad))
}

/// Network plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: KrNet<f32>,
    pub adam: AdamState,
    pub cfg: TrainConfig,
}

impl Trainer {
    pub fn new(net: KrNet<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            adam: AdamState::new(net.param_count()),
            net,
            cfg,
        })
    }

    /// One optimizer step on `indices`; returns the pre-update batch loss.
    pub fn step(&mut self, set: &PreparedSet, indices: &[usize]) -> Result<f64> {
        let (loss, mut grad) = batch_gradient(&self.net, set, indices, self.cfg.micro_batch)?;
        if let Some(max) = self.cfg.clip_norm {
            let norm = grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
            if norm > max {
                let s = (max / norm) as f32;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        let net = &self.net;
        let names = |i: usize| net.layer_of(i).to_string();
        let mut params = self.net.params().to_vec();
        adam_step(&mut params, &grad, &mut self.adam, &self.cfg.adam(), names)?;
        self.net.params_mut().copy_from_slice(&params);
        Ok(loss)
    }

    /// Full schedule. With `out_dir`, writes `loss.csv`, `best.krn` and
    /// `last.krn` there.
    pub fn fit(&mut self, train: &PreparedSet, val: &PreparedSet, out_dir: Option<&Path>) -> Result<TrainReport> {
        if train.n_total() != self.net.config().n_total || val.n_total() != self.net.config().n_total {
            return Err(Error::Config(format!(
                "dataset length {} does not match network length {}",
                train.n_total(),
                self.net.config().n_total
            )));
        }
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config("training and validation sets must be non-empty".into()));
        }
        let mb = self.cfg.micro_batch;
        let initial_val_loss = mean_loss(&self.net, val, mb)?;
        let mut best = Checkpoint::from_network(&self.net, None, 0, initial_val_loss as f32, self.cfg.seed);
        let mut history = Vec::with_capacity(self.cfg.epochs);
        let mut order: Vec<usize> = (0..train.len()).collect();
        log::info!("initial validation loss {initial_val_loss:.6}");

        for epoch in 1..=self.cfg.epochs {
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(self.cfg.batch) {
                let l = self.step(train, batch)?;
                loss_sum += l * batch.len() as f64;
            }
            let train_loss = loss_sum / train.len() as f64;
            let val_loss = mean_loss(&self.net, val, mb)?;
            if !val_loss.is_finite() {
                return Err(Error::Numeric(format!("validation loss became {val_loss} in epoch {epoch}")));
            }
            let entry = EpochLog {
                epoch,
                train_loss,
                val_loss,
                seconds: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {epoch}: train {train_loss:.6} val {val_loss:.6} ({:.1} s)",
                entry.seconds
            );
            history.push(entry);
            if val_loss < best.val_loss as f64 {
                best = Checkpoint::from_network(
                    &self.net,
                    Some(self.adam.clone()),
                    epoch as u32,
                    val_loss as f32,
                    self.cfg.seed,
                );
            }
            if let Some(dir) = out_dir {
                let last = Checkpoint::from_network(
                    &self.net,
                    Some(self.adam.clone()),
                    epoch as u32,
                    val_loss as f32,
                    self.cfg.seed,
                );
                last.save(&dir.join("last.krn"))?;
                best.save(&dir.join("best.krn"))?;
            }
        }
        let report = TrainReport {
            initial_val_loss,
            history,
            best,
        };
        if let Some(dir) = out_dir {
            write_bytes_atomic(&dir.join("loss.csv"), report.csv().as_bytes())?;
            if self.cfg.epochs == 0 {
                report.best.save(&dir.join("best.krn"))?;
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krnet::NetworkConfig;
    use crate::signal::MultibandConfig;
    use crate::training::{generate_dataset, DatasetSpec};

    fn tiny_layout() -> MultibandConfig {
        MultibandConfig::new(
            2.0 * std::f64::consts::PI * 60e9 / crate::signal::SPEED_OF_LIGHT,
            2.0 * std::f64::consts::PI * 62.5e6 / crate::signal::SPEED_OF_LIGHT,
            32,
            vec![
                crate::signal::Subband { start: 0, len: 8 },
                crate::signal::Subband { start: 24, len: 8 },
            ],
        )
        .unwrap()
    }

    fn prepared(count: usize, seed: u64) -> PreparedSet {
        let mut spec = DatasetSpec::new(tiny_layout(), count, seed);
        spec.nt_max = 4;
        spec.snr_min_db = 20.0;
        PreparedSet::from_dataset(&generate_dataset(&spec).unwrap()).unwrap()
    }

    #[test]
    fn partitioning_does_not_change_the_gradient() {
        let set = prepared(12, 1);
        let net = KrNet::<f32>::new(NetworkConfig::new(4, 1, 3, 32), 2).unwrap();
        let idx: Vec<usize> = (0..12).collect();
        let (la, ga) = batch_gradient(&net, &set, &idx, 12).unwrap();
        let (lb, gb) = batch_gradient(&net, &set, &idx, 5).unwrap();
        assert!((la - lb).abs() < 1e-4 * la.abs());
        let scale = ga.iter().map(|g| g.abs()).fold(0f32, f32::max);
        for (a, b) in ga.iter().zip(&gb) {
            assert!((a - b).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let set = prepared(16, 3);
        let run = || {
            let net = KrNet::<f32>::new(NetworkConfig::new(4, 1, 3, 32), 5).unwrap();
            let mut t = Trainer::new(net, TrainConfig { batch: 8, ..TrainConfig::small() }).unwrap();
            let idx: Vec<usize> = (0..8).collect();
            for _ in 0..10 {
                t.step(&set, &idx).unwrap();
            }
            t.net.params().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn history_rows_match_epochs() {
        let train = prepared(16, 4);
        let val = prepared(4, 5);
        let net = KrNet::<f32>::new(NetworkConfig::new(2, 1, 3, 32), 1).unwrap();
        let cfg = TrainConfig {
            batch: 8,
            epochs: 3,
            ..TrainConfig::small()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = Trainer::new(net, cfg).unwrap().fit(&train, &val, Some(dir.path())).unwrap();
        assert_eq!(report.history.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,train_loss,val_loss,seconds"));
        let best = Checkpoint::load(&dir.path().join("best.krn")).unwrap();
        assert!(best.val_loss as f64 <= report.initial_val_loss as f32 as f64);
    }

    #[test]
    fn mismatched_length_is_rejected() {
        let set = prepared(4, 6);
        let net = KrNet::<f32>::new(NetworkConfig::new(2, 1, 3, 16), 1).unwrap();
        let mut t = Trainer::new(net, TrainConfig::small()).unwrap();
        assert!(matches!(t.fit(&set, &set, None), Err(Error::Config(_))));
    }
}
