use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear warm-up from zero followed by cosine annealing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: f64,
    pub epochs: f64,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_lr > 0.0 && self.final_lr <= self.base_lr && self.base_lr.is_finite()) {
            return Err(Error::invalid("lr schedule", "need 0 < final_lr <= base_lr"));
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.epochs) {
            return Err(Error::invalid("lr schedule", "need 0 <= warmup_epochs < epochs"));
        }
        Ok(())
    }

    /// Learning rate at a (fractional) epoch in `[0, epochs]`.
    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        if !(0.0..=self.epochs).contains(&epoch) {
            return Err(Error::invalid(
                "lr_at",
                format!("epoch {epoch} outside [0, {}]", self.epochs),
            ));
        }
        let w = self.warmup_epochs;
        if epoch < w {
            return Ok(self.base_lr * epoch / w);
        }
        let t = (epoch - w) / (self.epochs - w);
        Ok(self.final_lr + 0.5 * (self.base_lr - self.final_lr) * (1.0 + (PI * t).cos()))
    }
}
