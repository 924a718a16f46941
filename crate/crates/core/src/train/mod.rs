//! End-to-end training: `L = MSE(X_rec, X) + γ·L_orth(Φ)` minimized with Adam
//! under a warm-up plus cosine learning-rate schedule.

mod adam;
mod data;
mod schedule;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamState};
pub use data::{augment, crop_patches, PatchDataset};
pub use schedule::LrSchedule;

use crate::autograd::{Tape, Var};
use crate::cs::{self, BoundSampling};
use crate::error::{Error, Result};
use crate::model::{FsoiNet, ModelConfig};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: f64,
    pub gamma: f64,
    pub seed: u64,
    pub patch_size: usize,
    /// Sliding-window stride used when cropping; defaults to the patch size.
    pub patch_stride: usize,
    pub patch_limit: Option<usize>,
    pub augment: bool,
    /// Write a checkpoint every this many epochs (the final one is always written).
    pub checkpoint_every: Option<usize>,
    pub dataset: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            batch_size: 32,
            epochs: 100,
            base_lr: 2e-4,
            final_lr: 5e-5,
            warmup_epochs: 3.0,
            gamma: 0.01,
            seed: 0,
            patch_size: 96,
            patch_stride: 96,
            patch_limit: None,
            augment: true,
            checkpoint_every: None,
            dataset: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            final_lr: self.final_lr,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule().validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("train config", "batch_size and epochs must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("train config", "gamma must be non-negative"));
        }
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(self.model.block_side) {
            return Err(Error::invalid(
                "train config",
                format!(
                    "patch size {} must be a positive multiple of the block side {}",
                    self.patch_size, self.model.block_side
                ),
            ));
        }
        if self.patch_stride == 0 {
            return Err(Error::invalid("train config", "patch stride must be positive"));
        }
        Ok(())
    }
}

/// Learning rate at a (possibly fractional) epoch under `cfg`'s schedule.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> Result<f64> {
    cfg.schedule().lr_at(epoch)
}

/// The three loss terms on a tape.
#[derive(Clone, Debug)]
pub struct LossVars<T: Element = f32> {
    pub total: Var<T>,
    pub mse: Var<T>,
    pub orth: Var<T>,
}

/// `mse(X_rec, X) + γ·orth_loss(Φ)`.
pub fn total_loss<T: Element>(
    tape: &mut Tape<T>,
    x_rec: &Var<T>,
    x: &Var<T>,
    s: &BoundSampling<T>,
    gamma: f64,
) -> Result<LossVars<T>> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("total_loss", "gamma must be non-negative"));
    }
    let mse = tape.mse_loss(x_rec, x)?;
    let orth = cs::orth_loss(tape, s);
    let weighted = tape.scale(&orth, T::from_f64_lossy(gamma));
    let total = tape.add(&mse, &weighted)?;
    Ok(LossVars { total, mse, orth })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_total_loss: f64,
    pub mean_mse: f64,
    pub mean_orth: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Orthogonality penalty of Φ before the first step.
    pub initial_orth: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_total_loss,mean_mse,mean_orth,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e}",
                e.epoch, e.mean_total_loss, e.mean_mse, e.mean_orth, e.lr
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn stack(patches: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let shape = patches[0].shape();
    let mut data = Vec::with_capacity(patches.len() * patches[0].numel());
    for p in patches {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[patches.len(), 1, shape[2], shape[3]], data)
}

/// Trains `model` in place. `on_epoch` runs after every epoch (for logging or
/// checkpoints) and may abort training by returning an error.
pub fn train<T: Element>(
    model: &mut FsoiNet<T>,
    data: &PatchDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &FsoiNet<T>) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.patch_size() != cfg.patch_size {
        return Err(Error::invalid(
            "train",
            format!("dataset patches are {}px, config says {}px", data.patch_size(), cfg.patch_size),
        ));
    }
    if model.config() != &cfg.model {
        return Err(Error::invalid("train", "model architecture differs from the training config"));
    }
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params().tensors());
    let mut log = TrainLog {
        initial_orth: model.sampling().orth_loss().as_f64(),
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let n = data.len();
    let batches = n.div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_mse, mut sum_orth) = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch = Vec::with_capacity(idx.len());
            for &i in idx {
                let p = &data.patches()[i];
                batch.push(if cfg.augment { augment(p, rng.random_range(0..8))? } else { p.clone() });
            }
            let x = stack(&batch)?.cast::<T>();

            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let xv = tape.constant(x);
            let out = model.forward_on(&mut tape, &bound, &xv)?;
            let s = BoundSampling::new(&mut tape, bound.var("phi")?.clone(), cfg.model.block_side)?;
            let loss = total_loss(&mut tape, &out.x_rec, &xv, &s, cfg.gamma)?;
            let total = loss.total.value().item().as_f64();
            if !total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss became {total} at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            sum_total += total;
            sum_mse += loss.mse.value().item().as_f64();
            sum_orth += loss.orth.value().item().as_f64();
            let grads = tape.backward(&loss.total)?;
            lr = schedule.lr_at(epoch as f64 + (b + 1) as f64 / batches as f64)?;
            adam_step(model.params_mut(), &bound, &grads, &mut adam, lr)?;
        }
        let k = batches as f64;
        let entry = EpochLog {
            epoch: epoch + 1,
            mean_total_loss: sum_total / k,
            mean_mse: sum_mse / k,
            mean_orth: sum_orth / k,
            lr,
        };
        log::info!(
            "epoch {:>3}  loss {:.6e}  mse {:.6e}  orth {:.6e}  lr {:.3e}",
            entry.epoch,
            entry.mean_total_loss,
            entry.mean_mse,
            entry.mean_orth,
            entry.lr
        );
        log.epochs.push(entry);
        on_epoch(&entry, model)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariantMode;
    use crate::synthetic::procedural_image;

    fn toy() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                block_side: 8,
                ratio: 0.25,
                channels: 2,
                phases: 1,
                mode: VariantMode::Fsoinet,
            },
            batch_size: 4,
            epochs: 4,
            base_lr: 1e-3,
            final_lr: 1e-4,
            warmup_epochs: 1.0,
            patch_size: 16,
            patch_stride: 16,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn toy_data() -> PatchDataset {
        let imgs: Vec<_> = (0..3).map(|i| procedural_image(32, 32, i)).collect();
        crop_patches(&imgs, 16, 16, None, 0).unwrap()
    }

    #[test]
    fn total_loss_matches_components() {
        let mut model = FsoiNet::<f64>::new(toy().model, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        *model.params_mut().get_mut("head.w").unwrap() = Tensor::uniform(&[1, 2, 3, 3], 0.5, &mut rng);
        let x: Tensor<f64> = procedural_image(16, 16, 9).cast();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = model.forward_on(&mut tape, &p, &xv).unwrap();
        let s = BoundSampling::new(&mut tape, p.var("phi").unwrap().clone(), 8).unwrap();
        let l = total_loss(&mut tape, &out.x_rec, &xv, &s, 0.01).unwrap();

        let rec = out.x_rec.value();
        let mse = rec.data().iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 256.0;
        let orth = model.sampling().orth_loss();
        assert!((l.total.value().item() - (mse + 0.01 * orth)).abs() < 1e-10);

        let l0 = total_loss(&mut tape, &out.x_rec, &xv, &s, 0.0).unwrap();
        assert!((l0.total.value().item() - mse).abs() < 1e-15);
    }

    #[test]
    fn total_loss_vanishes_at_perfect_fit_and_orthonormal_phi() {
        let mut tape = Tape::<f64>::new();
        let sm = crate::cs::SamplingMatrix::<f64>::dct_basis(4);
        let phi = tape.param(sm.phi().clone());
        let s = BoundSampling::new(&mut tape, phi, 4).unwrap();
        let x = tape.constant(Tensor::full(&[1, 1, 4, 4], 0.3));
        let l = total_loss(&mut tape, &x, &x, &s, 0.01).unwrap();
        assert!(l.total.value().item().abs() < 1e-12);
        assert!(total_loss(&mut tape, &x, &x, &s, -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(toy().validate().is_ok());
        assert!(TrainConfig { patch_size: 20, ..toy() }.validate().is_err());
        assert!(TrainConfig { warmup_epochs: 4.0, ..toy() }.validate().is_err());
        assert!(TrainConfig { final_lr: 0.0, ..toy() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..toy() }.validate().is_err());
    }

    #[test]
    fn short_run_is_deterministic_and_logs_each_epoch() {
        let cfg = toy();
        let data = toy_data();
        let before = data.clone();
        let run = || {
            let mut model = FsoiNet::<f32>::new(cfg.model, cfg.seed).unwrap();
            let mut seen = Vec::new();
            let log = train(&mut model, &data, &cfg, |e, _| {
                seen.push(e.epoch);
                Ok(())
            })
            .unwrap();
            assert_eq!(seen, vec![1, 2, 3, 4]);
            (model, log)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(data, before);
        assert_eq!(la.epochs.len(), 4);
        assert!((la.epochs[3].lr - 1e-4).abs() < 1e-15);
        assert!(la.epochs.iter().all(|e| e.mean_total_loss.is_finite()));
        let csv = la.to_csv();
        assert!(csv.starts_with("epoch,mean_total_loss,mean_mse,mean_orth,lr\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn loss_decreases_on_a_short_run() {
        let cfg = TrainConfig { epochs: 12, ..toy() };
        let mut model = FsoiNet::<f32>::new(cfg.model, cfg.seed).unwrap();
        let log = train(&mut model, &toy_data(), &cfg, |_, _| Ok(())).unwrap();
        assert!(log.epochs.last().unwrap().mean_total_loss < log.epochs[0].mean_total_loss);
        assert!(log.epochs.last().unwrap().mean_orth < log.initial_orth);
    }

    #[test]
    fn divergence_is_reported_with_position() {
        let cfg = TrainConfig { base_lr: 1e30, final_lr: 1e30, epochs: 3, ..toy() };
        let mut model = FsoiNet::<f32>::new(cfg.model, cfg.seed).unwrap();
        let err = train(&mut model, &toy_data(), &cfg, |_, _| Ok(())).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        assert!(err.to_string().contains("epoch"));
    }
}
