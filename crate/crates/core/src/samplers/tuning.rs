//! Robbins–Monro adaptation of proposal scales during burn-in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PATH_TARGET: f64 = 0.55;
pub const JOINT_TARGET: f64 = 0.25;
/// Target for one-dimensional random walks.
pub const SCALAR_TARGET: f64 = 0.44;

const GAMMA_MIN: f64 = 1e-12;
const GAMMA_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTally {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceTally {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// A positive proposal scale with a log-scale Robbins–Monro update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    steps: u64,
    pub tally: AcceptanceTally,
}

impl AdaptiveScale {
    pub fn new(scale: f64, target: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            target,
            steps: 0,
            tally: AcceptanceTally::default(),
        }
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Records an outcome and, when `adapt` is set, moves the scale toward
    /// the target acceptance rate with gain (k+1)^-0.6.
    pub fn record(&mut self, accepted: bool, adapt: bool) {
        self.tally.record(accepted);
        if adapt {
            self.steps += 1;
            let gain = (self.steps as f64).powf(-0.6);
            self.log_scale += gain * (accepted as u8 as f64 - self.target);
        }
    }

    pub fn reset_tally(&mut self) {
        self.tally = AcceptanceTally::default();
    }
}

/// Tuning of one auxiliary-gradient block: γ for the path step, κ for the
/// joint path-and-hyperparameter step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxTuning {
    pub gamma: AdaptiveScale,
    pub kappa: AdaptiveScale,
    /// Steps aborted by a non-finite gradient or ratio.
    pub non_finite: u64,
}

impl AuxTuning {
    pub fn new(gamma: f64, kappa: f64) -> Self {
        Self {
            gamma: AdaptiveScale::new(gamma, PATH_TARGET),
            kappa: AdaptiveScale::new(kappa, JOINT_TARGET),
            non_finite: 0,
        }
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma.scale()
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.kappa.scale()
    }

    pub fn check(&self, iteration: usize, what: &str) -> Result<()> {
        let g = self.gamma();
        if !(GAMMA_MIN..=GAMMA_MAX).contains(&g) {
            return Err(Error::AdaptationDiverged {
                iteration,
                what: format!("{what} gamma"),
                value: g,
            });
        }
        Ok(())
    }
}
