//! Optimization: Adam, the learning-rate schedule, training loops and the
//! finite-difference gradient check.

mod adam;
mod content;
mod gradcheck;
mod kmpn;

pub use adam::{adam_step, AdamConfig, AdamState, ParamSet};
pub use content::{train_content, ContentOutcome};
pub use gradcheck::{grad_check, GradCheckReport, GradCheckSpec, ModelKind, TensorReport, FD_STEP, REL_ERR_FLOOR};
pub use kmpn::{kmpn_batch_objective, train_ckmpn, train_kmpn, train_kmpn_observed, BatchObjective, KmpnObjective};

use std::fmt;

use crate::error::{Error, Result};
use crate::objectives::LossWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub deterministic: bool,
    /// Calls the epoch observer every this many epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            lr_start: 5e-3,
            lr_end: 0.0,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 7,
            deterministic: true,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.lr_end >= 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_start ≥ lr_end ≥ 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        self.weights.validate()
    }
}

/// Linearly interpolated learning rate at `step` of `total_steps`.
pub fn lr_at(config: &TrainConfig, step: usize, total_steps: usize) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Config(format!("lr step {step} outside 0..={total_steps}")));
    }
    let t = step as f64 / total_steps as f64;
    Ok(config.lr_start + (config.lr_end - config.lr_start) * t)
}

/// Per-epoch means of the loss components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub bpr: f64,
    pub l2: f64,
    pub dcorr: f64,
    pub cs: f64,
    pub lr: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, self.total, self.bpr, self.l2, self.dcorr, self.cs, self.lr
        )
    }
}

pub const LOSS_LOG_HEADER: &str = "epoch\ttotal\tbpr\tl2\tdcorr\tcs\tlr";

/// Loss log with a header line.
pub fn format_loss_log(log: &[EpochLog]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for e in log {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(start: f64, end: f64) -> TrainConfig {
        TrainConfig {
            lr_start: start,
            lr_end: end,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_endpoints() {
        let c = cfg(1e-3, 0.0);
        assert_eq!(lr_at(&c, 0, 10).unwrap(), 1e-3);
        assert_eq!(lr_at(&c, 10, 10).unwrap(), 0.0);
        assert!((lr_at(&c, 5, 10).unwrap() - 5e-4).abs() < 1e-18);
        assert!(lr_at(&c, 11, 10).is_err());
        assert!(lr_at(&c, 0, 0).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(cfg(1e-3, 1e-2).validate().is_err());
        assert!(cfg(1e-3, -1.0).validate().is_err());
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn log_line_shape() {
        let e = EpochLog {
            epoch: 1,
            total: 0.5,
            bpr: 0.25,
            l2: 2.0,
            dcorr: 0.0,
            cs: 0.0,
            lr: 1e-3,
        };
        assert_eq!(e.to_string(), "1\t0.5\t0.25\t2\t0\t0\t0.001");
        assert!(format_loss_log(&[e]).starts_with("epoch\ttotal"));
    }
}
