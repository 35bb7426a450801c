//! Annealed importance sampling over the growing data set for the factor
//! model: each trajectory is moved by a few sweeps targeting the posterior
//! given the returns seen so far, extended by one period through the AR
//! transitions, then reweighted by the predictive density of the new
//! returns.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_predictive_weight, CountPrior};
use crate::error::{domain, Error, Result};
use crate::mcmc::PathSnapshot;
use crate::model::{intensity_from_factors, FactorParams, StockParams};
use crate::numeric::log_sum_exp;
use crate::samplers::{agrad_update_factors, agrad_update_volatility, sample_jump_count, AuxTuning, FactorLik, StepControl, VolatilityLik};
use crate::SvRng;

const BRIDGE: StepControl = StepControl {
    adapt: false,
    update_hyper: false,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AisConfig {
    pub trajectories: usize,
    /// Sweeps of the path and count updates before each extension.
    pub bridge_sweeps: usize,
    pub truncation: u32,
    /// 0 uses every available core.
    pub workers: usize,
    pub seed: u64,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            trajectories: 1000,
            bridge_sweeps: 5,
            truncation: 10,
            workers: 1,
            seed: 0,
        }
    }
}

/// Parameters held at their posterior means; every stock needs a baseline b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisModel {
    pub stocks: Vec<StockParams>,
    pub factors: FactorParams,
    /// Step sizes of the path updates, per stock and for the factors.
    pub volatility_gamma: Vec<f64>,
    pub factor_gamma: f64,
}

impl AisModel {
    fn validate(&self) -> Result<()> {
        self.factors.validate()?;
        if self.factors.loadings.len() != self.stocks.len() {
            return domain("one loading row per stock required");
        }
        if self.volatility_gamma.len() != self.stocks.len() {
            return domain("one volatility step size per stock required");
        }
        for p in &self.stocks {
            p.validate()?;
            if p.b.is_none() {
                return domain("factor model needs a baseline b for every stock");
            }
        }
        Ok(())
    }

    fn rate(&self, i: usize, f: &[Vec<f64>], t: usize) -> f64 {
        let ft: Vec<f64> = f.iter().map(|fk| fk[t]).collect();
        let b = self.stocks[i].b.unwrap_or_default();
        intensity_from_factors(b, &self.factors.loadings[i], &ft, self.factors.lambda_star)
    }
}

#[derive(Debug, Clone)]
struct Trajectory {
    h: Vec<Vec<f64>>,
    n: Vec<Vec<u32>>,
    f: Vec<Vec<f64>>,
    vol: Vec<AuxTuning>,
    fac: AuxTuning,
    rng: SvRng,
    log_big_omega: f64,
    log_omega: Vec<f64>,
}

impl Trajectory {
    fn bridge(&mut self, model: &AisModel, returns: &[Vec<f64>], deltas: &[Vec<f64>], sweeps: usize) -> Result<()> {
        let p = model.stocks.len();
        for _ in 0..sweeps {
            for i in 0..p {
                let sp = &model.stocks[i];
                for t in 0..returns[i].len() {
                    let lambda = model.rate(i, &self.f, t + 1);
                    self.n[i][t] =
                        sample_jump_count(returns[i][t], self.h[i][t + 1], sp.mu_xi, sp.sigma2_xi, lambda, deltas[i][t], &mut self.rng);
                }
                let lik = VolatilityLik {
                    returns: &returns[i],
                    counts: Some(&self.n[i]),
                    mu_xi: sp.mu_xi,
                    sigma2_xi: sp.sigma2_xi,
                };
                let mut params = *sp;
                // the prior only enters the joint step, which is disabled here
                agrad_update_volatility(&mut self.h[i], &mut params, &lik, &Default::default(), &mut self.vol[i], BRIDGE, &mut self.rng)?;
            }
            if !self.f.is_empty() {
                let counts: Vec<&[u32]> = self.n.iter().map(Vec::as_slice).collect();
                let ds: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
                let b: Vec<f64> = model.stocks.iter().map(|s| s.b.unwrap_or_default()).collect();
                let w: Vec<&[f64]> = model.factors.loadings.iter().map(Vec::as_slice).collect();
                let lik = FactorLik {
                    counts: &counts,
                    deltas: &ds,
                    b: &b,
                    w: &w,
                    lambda_star: model.factors.lambda_star,
                };
                let mut alphas = model.factors.alphas.clone();
                agrad_update_factors(&mut self.f, &mut alphas, &lik, &mut self.fac, BRIDGE, &mut self.rng)?;
            }
        }
        Ok(())
    }

    fn extend(&mut self, model: &AisModel, r: &[f64], d: &[f64], truncation: u32) {
        for (fk, a) in self.f.iter_mut().zip(&model.factors.alphas) {
            let last = *fk.last().expect("non-empty factor path");
            fk.push(a * last + self.rng.sample::<f64, _>(StandardNormal));
        }
        let t = self.f.first().map_or(0, Vec::len).saturating_sub(1);
        let mut total = 0.0;
        for (i, sp) in model.stocks.iter().enumerate() {
            let last = *self.h[i].last().expect("non-empty volatility path");
            let h = sp.mu + sp.phi * (last - sp.mu) + sp.sigma2_eta.sqrt() * self.rng.sample::<f64, _>(StandardNormal);
            self.h[i].push(h);
            self.n[i].push(0);
            let rate = if self.f.is_empty() {
                model.rate(i, &[], 0)
            } else {
                model.rate(i, &self.f, t)
            };
            let lw = log_predictive_weight(r[i], h, sp, CountPrior::Poisson { rate }, d[i], truncation);
            self.log_omega[i] += lw;
            total += lw;
        }
        self.log_big_omega += total;
    }
}

/// Per-step estimates: the global predictive density of R_{T+j} and the
/// per-stock densities of r_{i,T+j}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisStep {
    pub log_increment: f64,
    pub stock_log_increments: Vec<f64>,
    /// ESS of the global weights after the step.
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisOutput {
    pub steps: Vec<AisStep>,
    /// Final log Ω per trajectory.
    pub log_global_weights: Vec<f64>,
    /// Final log ω per trajectory, `[trajectory][stock]`.
    pub log_stock_weights: Vec<Vec<f64>>,
}

impl AisOutput {
    pub fn log_increments(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.log_increment).collect()
    }

    /// `[stock][step]`.
    pub fn stock_log_increments(&self) -> Vec<Vec<f64>> {
        let p = self.steps.first().map_or(0, |s| s.stock_log_increments.len());
        (0..p)
            .map(|i| self.steps.iter().map(|s| s.stock_log_increments[i]).collect())
            .collect()
    }
}

pub struct AisEnsemble {
    model: AisModel,
    cfg: AisConfig,
    returns: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    trajectories: Vec<Trajectory>,
    pool: Option<rayon::ThreadPool>,
}

fn log_weight_mean(w: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = w.collect();
    log_sum_exp(&v) - (v.len() as f64).ln()
}

impl AisEnsemble {
    /// Starts every trajectory at a posterior draw of the in-sample latent
    /// paths, cycling through `snapshots` when there are fewer of them than
    /// trajectories.
    pub fn new(
        model: AisModel,
        returns: Vec<Vec<f64>>,
        deltas: Vec<Vec<f64>>,
        snapshots: &[PathSnapshot],
        cfg: AisConfig,
    ) -> Result<Self> {
        model.validate()?;
        let p = model.stocks.len();
        let k = model.factors.n_factors();
        if cfg.trajectories == 0 {
            return domain("AIS needs at least one trajectory");
        }
        if snapshots.is_empty() {
            return domain("AIS needs stored posterior paths; rerun the fit with a path stride");
        }
        if returns.len() != p || deltas.len() != p {
            return Err(Error::LengthMismatch(format!("{p} stocks but {} return series", returns.len())));
        }
        let t = returns[0].len();
        for s in snapshots {
            let ok = s.h.len() == p
                && s.n.len() == p
                && s.f.len() == k
                && s.h.iter().all(|h| h.len() == t + 1)
                && s.n.iter().all(|n| n.len() == t)
                && s.f.iter().all(|f| f.len() == t + 1);
            if !ok {
                return Err(Error::LengthMismatch(format!(
                    "posterior path snapshot at iteration {} does not match {p} stocks, {k} factors and {t} periods",
                    s.iteration
                )));
            }
        }
        let pool = match cfg.workers {
            1 => None,
            w => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Domain(format!("thread pool: {e}")))?,
            ),
        };
        let trajectories = (0..cfg.trajectories)
            .map(|s| {
                let snap = &snapshots[s % snapshots.len()];
                let mut rng = SvRng::seed_from_u64(cfg.seed);
                rng.set_stream(s as u64 + 1);
                Trajectory {
                    h: snap.h.clone(),
                    n: snap.n.clone(),
                    f: snap.f.clone(),
                    vol: model.volatility_gamma.iter().map(|g| AuxTuning::new(*g, 0.05)).collect(),
                    fac: AuxTuning::new(model.factor_gamma, 0.05),
                    rng,
                    log_big_omega: 0.0,
                    log_omega: vec![0.0; p],
                }
            })
            .collect();
        Ok(Self {
            model,
            cfg,
            returns,
            deltas,
            trajectories,
            pool,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn log_global_weights(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.log_big_omega).collect()
    }

    pub fn log_stock_weights(&self) -> Vec<Vec<f64>> {
        self.trajectories.iter().map(|t| t.log_omega.clone()).collect()
    }

    fn log_estimates(&self) -> (f64, Vec<f64>) {
        let global = log_weight_mean(self.trajectories.iter().map(|t| t.log_big_omega));
        let stocks = (0..self.model.stocks.len())
            .map(|i| log_weight_mean(self.trajectories.iter().map(|t| t.log_omega[i])))
            .collect();
        (global, stocks)
    }

    /// Bridges every trajectory to the data seen so far, then extends and
    /// reweights it with the next cross-section of returns.
    pub fn extend(&mut self, r_next: &[f64], d_next: &[f64]) -> Result<AisStep> {
        let p = self.model.stocks.len();
        if r_next.len() != p || d_next.len() != p {
            return Err(Error::LengthMismatch(format!("{p} stocks but {} new returns", r_next.len())));
        }
        let step = self.returns[0].len();
        let (g0, s0) = self.log_estimates();
        let model = &self.model;
        let (returns, deltas) = (&self.returns, &self.deltas);
        let cfg = self.cfg;
        let work = |tr: &mut Trajectory| -> Result<()> {
            tr.bridge(model, returns, deltas, cfg.bridge_sweeps)?;
            tr.extend(model, r_next, d_next, cfg.truncation);
            Ok(())
        };
        match &self.pool {
            None => self.trajectories.iter_mut().try_for_each(work)?,
            Some(pool) => pool.install(|| self.trajectories.par_iter_mut().try_for_each(work))?,
        }
        for (i, (r, d)) in r_next.iter().zip(d_next).enumerate() {
            self.returns[i].push(*r);
            self.deltas[i].push(*d);
        }
        let (g1, s1) = self.log_estimates();
        if !g1.is_finite() {
            return Err(Error::WeightCollapse { step });
        }
        let lw = self.log_global_weights();
        let norm = log_sum_exp(&lw);
        let ess = 1.0 / lw.iter().map(|w| (2.0 * (w - norm)).exp()).sum::<f64>();
        Ok(AisStep {
            log_increment: g1 - g0,
            stock_log_increments: s1.iter().zip(&s0).map(|(a, b)| a - b).collect(),
            ess,
        })
    }
}

/// Predictive densities of each out-of-sample cross-section in turn.
/// `future_returns` and `future_deltas` are `[stock][step]`.
pub fn run_ais(
    model: AisModel,
    returns: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    snapshots: &[PathSnapshot],
    future_returns: &[Vec<f64>],
    future_deltas: &[Vec<f64>],
    cfg: AisConfig,
) -> Result<AisOutput> {
    let mut ens = AisEnsemble::new(model, returns, deltas, snapshots, cfg)?;
    let steps_n = future_returns.first().map_or(0, Vec::len);
    if future_returns.len() != ens.model.stocks.len()
        || future_deltas.len() != future_returns.len()
        || future_returns.iter().chain(future_deltas).any(|v| v.len() != steps_n)
    {
        return Err(Error::LengthMismatch("out-of-sample returns and increments must be p × ℓ".into()));
    }
    let steps = (0..steps_n)
        .map(|j| {
            let r: Vec<f64> = future_returns.iter().map(|v| v[j]).collect();
            let d: Vec<f64> = future_deltas.iter().map(|v| v[j]).collect();
            ens.extend(&r, &d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AisOutput {
        steps,
        log_global_weights: ens.log_global_weights(),
        log_stock_weights: ens.log_stock_weights(),
    })
}
