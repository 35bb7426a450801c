//! Out-of-sample predictive densities with parameters fixed at their
//! in-sample posterior means: per-stock particle filters, annealed
//! importance sampling for the factor model, and predictive Bayes factors.

mod ais;
mod bayes;
mod pf;

pub use ais::{run_ais, AisConfig, AisEnsemble, AisModel, AisOutput, AisStep};
pub use bayes::{bayes_factor_series, cumulative, product_form};
pub use pf::{filter_stocks, particle_filter, ParticleCloud, PfConfig, PfJob, PfOutput, PfStep};

use serde::{Deserialize, Serialize};

use crate::model::{cell_loglik_marginal, nb_marginal_logpmf, StockParams};
use crate::numeric::{ln_gamma, log_normal_pdf, log_sum_exp};

/// Prior on a cell's jump count once its intensity is integrated out or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CountPrior {
    NoJumps,
    /// Intensity Gam(δ, c) integrated out.
    NegativeBinomial { delta: f64, c: f64 },
    /// Known intensity per calendar day.
    Poisson { rate: f64 },
}

impl CountPrior {
    fn log_pmf(self, n: u32, delta_t: f64) -> f64 {
        match self {
            Self::NoJumps => {
                if n == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::NegativeBinomial { delta, c } => {
                nb_marginal_logpmf(n, delta, c, delta_t).unwrap_or(f64::NEG_INFINITY)
            }
            Self::Poisson { rate } => {
                let m = rate * delta_t;
                if n == 0 {
                    -m
                } else {
                    n as f64 * m.ln() - m - ln_gamma(n as f64 + 1.0)
                }
            }
        }
    }
}

/// log Σ_{n ≤ truncation} N(r | nμ_ξ, e^h + nσ²_ξ) p(n).
pub fn log_predictive_weight(
    r: f64,
    h: f64,
    params: &StockParams,
    counts: CountPrior,
    delta_t: f64,
    truncation: u32,
) -> f64 {
    if let CountPrior::NoJumps = counts {
        return log_normal_pdf(r, 0.0, h.exp());
    }
    let terms: Vec<f64> = (0..=truncation)
        .map(|n| cell_loglik_marginal(r, n, h, params.mu_xi, params.sigma2_xi) + counts.log_pmf(n, delta_t))
        .collect();
    log_sum_exp(&terms)
}
