//! Sequential importance resampling for one stock's log-volatility with
//! parameters held fixed.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{log_predictive_weight, CountPrior};
use crate::error::{domain, Error, Result};
use crate::model::StockParams;
use crate::numeric::log_sum_exp;
use crate::SvRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    pub particles: usize,
    /// Largest jump count kept in the predictive mixture.
    pub truncation: u32,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_fraction: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            truncation: 10,
            ess_fraction: 0.5,
        }
    }
}

impl PfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return domain("particle filter needs at least one particle");
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            return domain(format!("ess_fraction {} outside [0, 1]", self.ess_fraction));
        }
        Ok(())
    }
}

/// Particles of h_t with log-normalized weights and the ancestors chosen at
/// the most recent step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub h: Vec<f64>,
    pub log_w: Vec<f64>,
    pub ancestors: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfStep {
    /// log p̂(r_t | r_{1:t−1}).
    pub log_increment: f64,
    /// ESS of the incoming weights, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfOutput {
    pub steps: Vec<PfStep>,
}

impl PfOutput {
    pub fn log_increments(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.log_increment).collect()
    }

    pub fn log_marginal(&self) -> f64 {
        self.steps.iter().map(|s| s.log_increment).sum()
    }
}

impl ParticleCloud {
    /// Equally weighted particles from posterior draws of h_T, resampled
    /// with replacement when the count differs from `particles`.
    pub fn from_draws<R: Rng + ?Sized>(draws: &[f64], particles: usize, rng: &mut R) -> Result<Self> {
        if draws.is_empty() || particles == 0 {
            return domain("particle cloud needs draws and a positive size");
        }
        let h: Vec<f64> = if draws.len() == particles {
            draws.to_vec()
        } else {
            (0..particles).map(|_| draws[rng.random_range(0..draws.len())]).collect()
        };
        let lw = -(particles as f64).ln();
        Ok(Self {
            h,
            log_w: vec![lw; particles],
            ancestors: (0..particles).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// 1 / Σ W², from the normalized weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.log_w.iter().map(|lw| (2.0 * lw).exp()).sum::<f64>()
    }

    /// Advances the cloud by one observation.
    #[allow(clippy::too_many_arguments)]
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        r: f64,
        delta_t: f64,
        params: &StockParams,
        counts: CountPrior,
        cfg: &PfConfig,
        step: usize,
        rng: &mut R,
    ) -> Result<PfStep> {
        let s = self.len();
        let ess = self.ess();
        let resampled = ess < cfg.ess_fraction * s as f64;
        if resampled {
            let weights: Vec<f64> = self.log_w.iter().map(|lw| lw.exp()).collect();
            let dist = WeightedIndex::new(&weights).map_err(|_| Error::WeightCollapse { step })?;
            self.ancestors = (0..s).map(|_| dist.sample(rng)).collect();
            let lw = -(s as f64).ln();
            self.log_w.iter_mut().for_each(|w| *w = lw);
        } else {
            self.ancestors = (0..s).collect();
        }
        let sd = params.sigma2_eta.sqrt();
        let prev = std::mem::take(&mut self.h);
        self.h = self
            .ancestors
            .iter()
            .map(|&a| {
                params.mu + params.phi * (prev[a] - params.mu) + sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let log_inc: Vec<f64> = self
            .h
            .iter()
            .zip(&self.log_w)
            .map(|(&h, &lw)| lw + log_predictive_weight(r, h, params, counts, delta_t, cfg.truncation))
            .collect();
        let log_increment = log_sum_exp(&log_inc);
        if !log_increment.is_finite() {
            return Err(Error::WeightCollapse { step });
        }
        self.log_w = log_inc.into_iter().map(|v| v - log_increment).collect();
        Ok(PfStep {
            log_increment,
            ess,
            resampled,
        })
    }
}

/// One-step-ahead predictive log densities of `returns`, starting from
/// posterior draws of the last in-sample log-volatility.
pub fn particle_filter<R: Rng + ?Sized>(
    params: &StockParams,
    counts: CountPrior,
    initial_h: &[f64],
    returns: &[f64],
    deltas: &[f64],
    cfg: &PfConfig,
    rng: &mut R,
) -> Result<PfOutput> {
    cfg.validate()?;
    if returns.len() != deltas.len() {
        return Err(Error::LengthMismatch(format!(
            "{} returns but {} calendar increments",
            returns.len(),
            deltas.len()
        )));
    }
    let mut cloud = ParticleCloud::from_draws(initial_h, cfg.particles, rng)?;
    let steps = returns
        .iter()
        .zip(deltas)
        .enumerate()
        .map(|(j, (&r, &d))| cloud.step(r, d, params, counts, cfg, j, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PfOutput { steps })
}

/// One stock's filtering problem.
#[derive(Debug, Clone, Copy)]
pub struct PfJob<'a> {
    pub params: &'a StockParams,
    pub counts: CountPrior,
    pub initial_h: &'a [f64],
    pub returns: &'a [f64],
    pub deltas: &'a [f64],
}

/// Filters every stock independently; stock i draws from stream i+1 of
/// `seed`, so the result does not depend on `workers` (0 uses every core).
pub fn filter_stocks(jobs: &[PfJob<'_>], cfg: &PfConfig, seed: u64, workers: usize) -> Result<Vec<PfOutput>> {
    let one = |(i, job): (usize, &PfJob<'_>)| {
        let mut rng = SvRng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        particle_filter(job.params, job.counts, job.initial_h, job.returns, job.deltas, cfg, &mut rng)
    };
    if workers == 1 {
        return jobs.iter().enumerate().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().enumerate().map(one).collect())
}
