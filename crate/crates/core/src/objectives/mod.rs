//! Training objectives and their gradients.

mod dcorr;
mod pairwise;
mod pca;

pub use dcorr::{distance_correlation, distance_correlation_grad, soft_dcorr_loss, soft_dcorr_with_basis, DVAR_FLOOR};
pub use pairwise::{bpr_loss, cross_system_loss, l2_reg, nrms_click_loss, ClickLoss, CrossSystemLoss, PairLoss};
pub use pca::{center_columns, num_components, pca_project, symmetric_eigen, PcaProjection};

use crate::error::{Error, Result};

/// Weights of the regularizers added to the ranking loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// L2 weight on the batch embeddings.
    pub lambda1: f64,
    /// Soft distance-correlation weight.
    pub lambda2: f64,
    /// Cross-system contrastive weight.
    pub lambda_cs: f64,
    /// Fraction of principal components kept.
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1e-5,
            lambda2: 1e-2,
            lambda_cs: 0.1,
            epsilon: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_cs", self.lambda_cs),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

/// Which objective a run optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Kmpn,
    Ckmpn,
}

/// Unweighted loss components. `cross_system` is present only when anchor
/// embeddings were supplied.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub bpr: f64,
    pub l2: f64,
    pub dcorr: f64,
    pub cross_system: Option<f64>,
}

/// `bpr + λ₁·l2 + λ₂·dcorr`, plus `λ_CS·cs` in [`Mode::Ckmpn`].
pub fn total_loss(mode: Mode, weights: &LossWeights, parts: &LossParts) -> Result<f64> {
    weights.validate()?;
    let base = parts.bpr + weights.lambda1 * parts.l2 + weights.lambda2 * parts.dcorr;
    match mode {
        Mode::Kmpn => Ok(base),
        Mode::Ckmpn => {
            let cs = parts
                .cross_system
                .ok_or_else(|| Error::Config("ckmpn mode requires content embeddings".into()))?;
            Ok(base + weights.lambda_cs * cs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_leave_bpr() {
        let w = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda_cs: 0.0,
            epsilon: 0.5,
        };
        let parts = LossParts {
            bpr: 1.25,
            l2: 3.0,
            dcorr: 2.0,
            cross_system: Some(7.0),
        };
        assert_eq!(total_loss(Mode::Kmpn, &w, &parts).unwrap(), 1.25);
        assert_eq!(total_loss(Mode::Ckmpn, &w, &parts).unwrap(), 1.25);
    }

    #[test]
    fn linear_combination() {
        let w = LossWeights {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda_cs: 0.25,
            epsilon: 0.5,
        };
        let parts = LossParts {
            bpr: 0.0,
            l2: 2.0,
            dcorr: 4.0,
            cross_system: None,
        };
        assert_eq!(total_loss(Mode::Kmpn, &w, &parts).unwrap(), 2.0 + 0.5 * 4.0);
        assert!(total_loss(Mode::Ckmpn, &w, &parts).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        let w = LossWeights {
            epsilon: 1.5,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }
}
