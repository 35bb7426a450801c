//! Gibbs sweeps over the three model variants, with burn-in adaptation,
//! thinning, per-stock parallelism and resumable checkpoints.
//!
//! Every stock owns a ChaCha8 stream (`seed`, stream `i + 1`) and the global
//! factor block owns stream 0, so results do not depend on the worker count.

pub mod checkpoint;
pub mod diagnostics;
pub mod geweke;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorParams, LatentState, PriorSpec, ReturnsPanel, StockParams};
use crate::numeric::sigmoid;
use crate::samplers::{
    agrad_update_factors, agrad_update_volatility, asis_factor_move, asis_volatility_move,
    sample_independent_intensity, sample_jump_count, sample_jump_sizes, sample_mu_volatility,
    sample_mu_xi, sample_sigma2_xi, update_loadings, AdaptiveScale, AsisScales, AuxTuning,
    FactorLik, StepControl, VolatilityLik,
};
use crate::samplers::tuning::{JOINT_TARGET, SCALAR_TARGET};
use crate::SvRng;

pub use diagnostics::{effective_sample_size, EssEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Stochastic volatility without jumps.
    Sv,
    /// Jumps with independent Gamma intensities.
    SvjIndependent,
    /// Jumps with factor-driven intensities.
    SvjFactor,
}

impl ModelVariant {
    pub fn has_jumps(self) -> bool {
        !matches!(self, Self::Sv)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sv => "sv",
            Self::SvjIndependent => "svj_independent",
            Self::SvjFactor => "svj_factor",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sv" => Ok(Self::Sv),
            "svj_independent" | "independent" => Ok(Self::SvjIndependent),
            "svj_factor" | "factor" => Ok(Self::SvjFactor),
            other => Err(Error::Domain(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Which updates a sweep performs. Switching a step off holds its block at
/// the current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub volatility_path: bool,
    pub volatility_hyper: bool,
    pub volatility_mu: bool,
    pub volatility_asis: bool,
    pub jump_counts: bool,
    pub jump_hyper: bool,
    pub independent_intensities: bool,
    pub loadings: bool,
    pub factor_path: bool,
    pub factor_hyper: bool,
    pub factor_asis: bool,
}

impl SweepPlan {
    pub fn for_variant(variant: ModelVariant) -> Self {
        let jumps = variant.has_jumps();
        let factor = variant == ModelVariant::SvjFactor;
        Self {
            volatility_path: true,
            volatility_hyper: true,
            volatility_mu: true,
            volatility_asis: true,
            jump_counts: jumps,
            jump_hyper: jumps,
            independent_intensities: variant == ModelVariant::SvjIndependent,
            loadings: factor,
            factor_path: factor,
            factor_hyper: factor,
            factor_asis: factor,
        }
    }

    /// Every step off.
    pub fn frozen() -> Self {
        Self {
            volatility_path: false,
            volatility_hyper: false,
            volatility_mu: false,
            volatility_asis: false,
            jump_counts: false,
            jump_hyper: false,
            independent_intensities: false,
            loadings: false,
            factor_path: false,
            factor_hyper: false,
            factor_asis: false,
        }
    }

    fn validate(&self, variant: ModelVariant) -> Result<()> {
        let jumps = self.jump_counts || self.jump_hyper || self.independent_intensities;
        if jumps && !variant.has_jumps() {
            return Err(Error::Domain("jump steps enabled for the sv variant".into()));
        }
        let factor = self.loadings || self.factor_path || self.factor_hyper || self.factor_asis;
        if factor && variant != ModelVariant::SvjFactor {
            return Err(Error::Domain("factor steps enabled outside the factor variant".into()));
        }
        if self.independent_intensities && (self.loadings || self.factor_path || self.factor_asis) {
            return Err(Error::Domain(
                "independent intensities cannot be combined with factor steps".into(),
            ));
        }
        Ok(())
    }
}

/// Starting proposal scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningInit {
    pub volatility_gamma: f64,
    pub volatility_kappa: f64,
    pub factor_gamma: f64,
    pub factor_kappa: f64,
    pub factor_asis_scale: f64,
    pub loading_scale: f64,
}

impl Default for TuningInit {
    fn default() -> Self {
        Self {
            volatility_gamma: 0.2,
            volatility_kappa: 0.05,
            factor_gamma: 0.2,
            factor_kappa: 0.05,
            factor_asis_scale: 0.3,
            loading_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub variant: ModelVariant,
    pub n_factors: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub checkpoint_interval: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
    /// Keep full latent paths on every `path_stride`-th retained draw; 0 keeps none.
    pub path_stride: usize,
    pub plan: SweepPlan,
    pub tuning: TuningInit,
}

impl McmcConfig {
    pub fn new(variant: ModelVariant, iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            variant,
            n_factors: if variant == ModelVariant::SvjFactor { 2 } else { 0 },
            seed,
            workers: 1,
            checkpoint_interval: None,
            checkpoint_path: None,
            path_stride: 0,
            plan: SweepPlan::for_variant(variant),
            tuning: TuningInit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Domain("thin must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::Domain("burn-in exceeds the number of iterations".into()));
        }
        if (self.variant == ModelVariant::SvjFactor) != (self.n_factors > 0) {
            return Err(Error::Domain(
                "the factor variant needs n_factors ≥ 1 and the others need 0".into(),
            ));
        }
        if self.checkpoint_interval == Some(0) {
            return Err(Error::Domain("checkpoint interval must be positive".into()));
        }
        let t = &self.tuning;
        for v in [
            t.volatility_gamma,
            t.volatility_kappa,
            t.factor_gamma,
            t.factor_kappa,
            t.factor_asis_scale,
            t.loading_scale,
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain("initial proposal scales must be positive".into()));
            }
        }
        self.plan.validate(self.variant)
    }

    /// Fields that change the chain's trajectory; workers and file paths do not.
    fn fingerprint(&self, panel: &ReturnsPanel, prior: &PriorSpec) -> [u8; 32] {
        #[derive(Serialize)]
        struct Key<'a> {
            burn_in: usize,
            thin: usize,
            variant: ModelVariant,
            n_factors: usize,
            seed: u64,
            path_stride: usize,
            plan: &'a SweepPlan,
            tuning: &'a TuningInit,
            prior: &'a PriorSpec,
            panel: &'a ReturnsPanel,
        }
        let key = Key {
            burn_in: self.burn_in,
            thin: self.thin,
            variant: self.variant,
            n_factors: self.n_factors,
            seed: self.seed,
            path_stride: self.path_stride,
            plan: &self.plan,
            tuning: &self.tuning,
            prior,
            panel,
        };
        checkpoint::sha256(&serde_json::to_vec(&key).expect("serialisable"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StockChain {
    params: StockParams,
    h: Vec<f64>,
    n: Vec<u32>,
    xi: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    loading: Vec<f64>,
    vol: AuxTuning,
    asis: AsisScales,
    loading_scale: AdaptiveScale,
    rng: SvRng,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GlobalChain {
    alphas: Vec<f64>,
    f: Vec<Vec<f64>>,
    tuning: AuxTuning,
    asis: AdaptiveScale,
}

/// Latent paths at one retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSnapshot {
    pub iteration: usize,
    pub h: Vec<Vec<f64>>,
    pub n: Vec<Vec<u32>>,
    pub f: Vec<Vec<f64>>,
}

/// Rates of blocks that never proposed are NaN, which JSON stores as null.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Option::<f64>::deserialize(d).map(|v| v.unwrap_or(f64::NAN))
}

/// Post-burn-in acceptance rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockAcceptance {
    #[serde(deserialize_with = "nan_from_null")]
    pub path: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub joint: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub asis_mu: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub asis_sigma2: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub asis_phi: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub loadings: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub non_finite: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorAcceptance {
    #[serde(deserialize_with = "nan_from_null")]
    pub path: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub joint: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub asis: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub non_finite: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub stocks: Vec<StockAcceptance>,
    pub factors: Option<FactorAcceptance>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Accumulators {
    iterations: Vec<usize>,
    stock_params: Vec<Vec<StockParams>>,
    factor_params: Vec<FactorParams>,
    log_lik: Vec<f64>,
    h_last: Vec<Vec<f64>>,
    f_last: Vec<Vec<f64>>,
    jump_count: Vec<Vec<f64>>,
    jump_any: Vec<Vec<f64>>,
    lambda_sum: Vec<Vec<f64>>,
    h_sum: Vec<Vec<f64>>,
    snapshots: Vec<PathSnapshot>,
}

/// Retained output of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub variant: ModelVariant,
    pub stock_ids: Vec<String>,
    pub iterations: Vec<usize>,
    /// `[draw][stock]`.
    pub stock_params: Vec<Vec<StockParams>>,
    pub factor_params: Vec<FactorParams>,
    /// Log-likelihood of the returns given the latent state at each draw.
    pub log_lik: Vec<f64>,
    /// Final log-volatility `h_T` at each draw, `[draw][stock]`.
    pub h_last: Vec<Vec<f64>>,
    /// Final factor values `F_T` at each draw, `[draw][factor]`.
    pub f_last: Vec<Vec<f64>>,
    /// Posterior P(n_it > 0), `[stock][time]`.
    pub jump_prob: Vec<Vec<f64>>,
    pub mean_jumps: Vec<Vec<f64>>,
    pub lambda_mean: Vec<Vec<f64>>,
    /// Posterior mean of h_{0:T}.
    pub h_mean: Vec<Vec<f64>>,
    pub snapshots: Vec<PathSnapshot>,
    pub acceptance: AcceptanceReport,
    /// Adapted γ of each stock's volatility block and of the factor block.
    pub final_gamma: Vec<f64>,
    pub final_factor_gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamName {
    Mu,
    Phi,
    Sigma2Eta,
    MuXi,
    Sigma2Xi,
    B,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        Self::Mu,
        Self::Phi,
        Self::Sigma2Eta,
        Self::MuXi,
        Self::Sigma2Xi,
        Self::B,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Mu => "mu",
            Self::Phi => "phi",
            Self::Sigma2Eta => "sigma2_eta",
            Self::MuXi => "mu_xi",
            Self::Sigma2Xi => "sigma2_xi",
            Self::B => "b",
        }
    }

    pub fn get(self, p: &StockParams) -> Option<f64> {
        match self {
            Self::Mu => Some(p.mu),
            Self::Phi => Some(p.phi),
            Self::Sigma2Eta => Some(p.sigma2_eta),
            Self::MuXi => Some(p.mu_xi),
            Self::Sigma2Xi => Some(p.sigma2_xi),
            Self::B => p.b,
        }
    }

    /// Whether the parameter is sampled under `variant`.
    pub fn applies(self, variant: ModelVariant) -> bool {
        match self {
            Self::Mu | Self::Phi | Self::Sigma2Eta => true,
            Self::MuXi | Self::Sigma2Xi => variant.has_jumps(),
            Self::B => variant == ModelVariant::SvjFactor,
        }
    }
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.iterations.len()
    }

    pub fn param_chain(&self, stock: usize, name: ParamName) -> Option<Vec<f64>> {
        self.stock_params.iter().map(|d| name.get(&d[stock])).collect()
    }

    pub fn posterior_mean_params(&self) -> Vec<StockParams> {
        let n = self.n_draws() as f64;
        let p = self.stock_ids.len();
        (0..p)
            .map(|i| {
                let mut m = StockParams {
                    mu: 0.0,
                    phi: 0.0,
                    sigma2_eta: 0.0,
                    mu_xi: 0.0,
                    sigma2_xi: 0.0,
                    b: self.stock_params.first().and_then(|d| d[i].b.map(|_| 0.0)),
                };
                for d in &self.stock_params {
                    let s = &d[i];
                    m.mu += s.mu / n;
                    m.phi += s.phi / n;
                    m.sigma2_eta += s.sigma2_eta / n;
                    m.mu_xi += s.mu_xi / n;
                    m.sigma2_xi += s.sigma2_xi / n;
                    if let (Some(acc), Some(b)) = (m.b.as_mut(), s.b) {
                        *acc += b / n;
                    }
                }
                m
            })
            .collect()
    }

    pub fn save(&self, path: &Path, config_hash: [u8; 32]) -> Result<()> {
        let payload = serde_json::to_vec(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        checkpoint::write_atomic(
            path,
            &checkpoint::encode(checkpoint::PayloadKind::Draws, config_hash, &payload),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let payload = checkpoint::decode(&bytes, checkpoint::PayloadKind::Draws, None)?;
        serde_json::from_slice(payload).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

struct SweepCtx<'a> {
    panel: &'a ReturnsPanel,
    prior: &'a PriorSpec,
    plan: SweepPlan,
    variant: ModelVariant,
    f: Option<&'a [Vec<f64>]>,
    iteration: usize,
    adapt: bool,
}

fn stock_seed_rng(seed: u64, stream: u64) -> SvRng {
    let mut rng = SvRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INIT_STREAM: u64 = 1 << 40;

/// Crude log-volatility path from a centred moving average of squared
/// returns, floored relative to a robust scale.
fn initial_log_vol(r: &[f64]) -> Vec<f64> {
    let mut sq: Vec<f64> = r.iter().map(|x| x * x).collect();
    let mut sorted = sq.clone();
    sorted.sort_by(f64::total_cmp);
    // median of χ²₁ is 0.4549
    let base = (sorted[sorted.len() / 2] / 0.4549).max(1e-8);
    for v in sq.iter_mut() {
        *v = v.min(25.0 * base);
    }
    let half = 10usize;
    let t = r.len();
    let mut h = Vec::with_capacity(t + 1);
    for k in 0..t {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(t);
        let avg = sq[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        h.push(avg.max(0.05 * base).ln());
    }
    h.insert(0, h[0]);
    h
}

fn init_stock(i: usize, panel: &ReturnsPanel, prior: &PriorSpec, config: &McmcConfig) -> StockChain {
    let r = panel.returns(i);
    let t = r.len();
    let h = initial_log_vol(r);
    let mu = h.iter().sum::<f64>() / h.len() as f64;
    let jp = panel.jump_prior(i, prior);
    let factor = config.variant == ModelVariant::SvjFactor;
    let lambda = match config.variant {
        ModelVariant::Sv => vec![0.0; t],
        _ if config.plan.independent_intensities => vec![prior.delta / prior.c; t],
        _ => vec![prior.lambda_star * sigmoid(prior.mu_b); t],
    };
    let loading = if factor {
        let mut init = stock_seed_rng(config.seed, INIT_STREAM + i as u64);
        (0..config.n_factors)
            .map(|_| 0.1 * init.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        Vec::new()
    };
    let tu = &config.tuning;
    StockChain {
        params: StockParams {
            mu,
            phi: 0.9,
            sigma2_eta: 0.1,
            mu_xi: 0.0,
            sigma2_xi: if config.variant.has_jumps() { jp.mean_sigma2() } else { 1.0 },
            b: factor.then_some(prior.mu_b),
        },
        h,
        n: vec![0; t],
        xi: vec![Vec::new(); t],
        lambda,
        loading,
        vol: AuxTuning::new(tu.volatility_gamma, tu.volatility_kappa),
        asis: AsisScales::default(),
        loading_scale: AdaptiveScale::new(tu.loading_scale, JOINT_TARGET),
        rng: stock_seed_rng(config.seed, i as u64 + 1),
    }
}

fn non_finite(iteration: usize, what: String) -> Error {
    Error::NonFinite { iteration, what }
}

fn sweep_stock(i: usize, s: &mut StockChain, ctx: &SweepCtx<'_>) -> Result<()> {
    let plan = ctx.plan;
    let r = ctx.panel.returns(i);
    let d = ctx.panel.deltas(i);
    let id = &ctx.panel.stock_ids()[i];
    let jumps = ctx.variant.has_jumps();

    if plan.volatility_path || plan.volatility_asis {
        let lik = VolatilityLik {
            returns: r,
            counts: jumps.then_some(&s.n[..]),
            mu_xi: s.params.mu_xi,
            sigma2_xi: s.params.sigma2_xi,
        };
        if plan.volatility_path {
            let ctl = StepControl {
                adapt: ctx.adapt,
                update_hyper: plan.volatility_hyper,
            };
            agrad_update_volatility(&mut s.h, &mut s.params, &lik, ctx.prior, &mut s.vol, ctl, &mut s.rng)?;
        }
        if plan.volatility_mu {
            s.params.mu = sample_mu_volatility(&s.h, s.params.phi, s.params.sigma2_eta, ctx.prior, &mut s.rng);
        }
        if plan.volatility_asis {
            asis_volatility_move(&mut s.h, &mut s.params, &lik, ctx.prior, &mut s.asis, ctx.adapt, &mut s.rng);
        }
    } else if plan.volatility_mu {
        s.params.mu = sample_mu_volatility(&s.h, s.params.phi, s.params.sigma2_eta, ctx.prior, &mut s.rng);
    }
    s.vol.check(ctx.iteration, &format!("stock {id} volatility"))?;

    if plan.jump_counts {
        let (mx, sx) = (s.params.mu_xi, s.params.sigma2_xi);
        for t in 0..r.len() {
            let n = sample_jump_count(r[t], s.h[t + 1], mx, sx, s.lambda[t], d[t], &mut s.rng);
            s.n[t] = n;
            s.xi[t] = sample_jump_sizes(r[t], n, s.h[t + 1], mx, sx, &mut s.rng);
        }
    }
    if plan.jump_hyper {
        let jp = ctx.panel.jump_prior(i, ctx.prior);
        s.params.mu_xi = sample_mu_xi(&s.xi, s.params.sigma2_xi, &jp, &mut s.rng);
        s.params.sigma2_xi = sample_sigma2_xi(&s.xi, s.params.mu_xi, &jp, &mut s.rng);
    }
    if plan.independent_intensities {
        for ((l, &n), &dt) in s.lambda.iter_mut().zip(&s.n).zip(d) {
            *l = sample_independent_intensity(n, ctx.prior.delta, ctx.prior.c, dt, &mut s.rng);
        }
    }
    if plan.loadings {
        let f = ctx.f.expect("factor paths present in the factor variant");
        let mut b = s.params.b.unwrap_or(ctx.prior.mu_b);
        update_loadings(
            &mut b,
            &mut s.loading,
            &s.n,
            d,
            f,
            ctx.prior.lambda_star,
            ctx.prior,
            &mut s.loading_scale,
            ctx.adapt,
            &mut s.rng,
        );
        s.params.b = Some(b);
    }

    if let Some(t) = s.h.iter().position(|v| !v.is_finite()) {
        return Err(non_finite(ctx.iteration, format!("stock {id} h[{t}]")));
    }
    let p = &s.params;
    if ![p.mu, p.phi, p.sigma2_eta, p.mu_xi, p.sigma2_xi, p.b.unwrap_or(0.0)]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(non_finite(ctx.iteration, format!("stock {id} parameters {p:?}")));
    }
    Ok(())
}

/// A running chain. Owns its panel, so the returns can be replaced between
/// sweeps by simulation-based tests.
pub struct Chain {
    panel: ReturnsPanel,
    prior: PriorSpec,
    config: McmcConfig,
    hash: [u8; 32],
    iteration: usize,
    stocks: Vec<StockChain>,
    global: Option<GlobalChain>,
    global_rng: SvRng,
    acc: Accumulators,
    pool: Option<rayon::ThreadPool>,
}

impl Chain {
    pub fn new(panel: ReturnsPanel, prior: PriorSpec, config: McmcConfig) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        let pool = match config.workers {
            1 => None,
            w => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Domain(format!("thread pool: {e}")))?,
            ),
        };
        let stocks = (0..panel.n_stocks())
            .map(|i| init_stock(i, &panel, &prior, &config))
            .collect();
        let global = (config.variant == ModelVariant::SvjFactor).then(|| GlobalChain {
            alphas: vec![0.5; config.n_factors],
            f: vec![vec![0.0; panel.n_times() + 1]; config.n_factors],
            tuning: AuxTuning::new(config.tuning.factor_gamma, config.tuning.factor_kappa),
            asis: AdaptiveScale::new(config.tuning.factor_asis_scale, SCALAR_TARGET),
        });
        let hash = config.fingerprint(&panel, &prior);
        let mut chain = Self {
            global_rng: stock_seed_rng(config.seed, 0),
            panel,
            prior,
            config,
            hash,
            iteration: 0,
            stocks,
            global,
            acc: Accumulators::default(),
            pool,
        };
        chain.refresh_intensities();
        Ok(chain)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn panel(&self) -> &ReturnsPanel {
        &self.panel
    }

    pub fn config(&self) -> &McmcConfig {
        &self.config
    }

    pub fn config_hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn stock_params(&self) -> Vec<StockParams> {
        self.stocks.iter().map(|s| s.params).collect()
    }

    pub fn factor_params(&self) -> Option<FactorParams> {
        self.global.as_ref().map(|g| FactorParams {
            loadings: self.stocks.iter().map(|s| s.loading.clone()).collect(),
            alphas: g.alphas.clone(),
            lambda_star: self.prior.lambda_star,
        })
    }

    pub fn latent(&self) -> LatentState {
        LatentState {
            h: self.stocks.iter().map(|s| s.h.clone()).collect(),
            n: self.stocks.iter().map(|s| s.n.clone()).collect(),
            xi_sums: self
                .stocks
                .iter()
                .map(|s| s.xi.iter().map(|c| c.iter().sum()).collect())
                .collect(),
            xi: self.stocks.iter().map(|s| s.xi.clone()).collect(),
            f: self.global.as_ref().map(|g| g.f.clone()).unwrap_or_default(),
            lambda: self.stocks.iter().map(|s| s.lambda.clone()).collect(),
        }
    }

    /// Replaces the returns while keeping the latent state and parameters.
    pub fn set_returns(&mut self, returns: Vec<Vec<f64>>) -> Result<()> {
        self.panel = self.panel.with_returns(returns)?;
        Ok(())
    }

    /// Overwrites the state of every block.
    pub fn set_state(
        &mut self,
        params: &[StockParams],
        factors: Option<&FactorParams>,
        latent: &LatentState,
    ) -> Result<()> {
        let p = self.stocks.len();
        let t = self.panel.n_times();
        if params.len() != p || latent.h.len() != p || latent.n.len() != p {
            return Err(Error::LengthMismatch("state does not match the panel's stocks".into()));
        }
        if latent.h.iter().any(|h| h.len() != t + 1) || latent.n.iter().any(|n| n.len() != t) {
            return Err(Error::LengthMismatch("latent paths do not match the panel length".into()));
        }
        for (i, s) in self.stocks.iter_mut().enumerate() {
            s.params = params[i];
            s.h.clone_from(&latent.h[i]);
            s.n.clone_from(&latent.n[i]);
            if let Some(xi) = latent.xi.get(i) {
                s.xi.clone_from(xi);
            }
            if let Some(l) = latent.lambda.get(i) {
                s.lambda.clone_from(l);
            }
            if let Some(fp) = factors {
                s.loading.clone_from(&fp.loadings[i]);
            }
        }
        if let (Some(g), Some(fp)) = (self.global.as_mut(), factors) {
            g.alphas.clone_from(&fp.alphas);
            g.f.clone_from(&latent.f);
        }
        self.refresh_intensities();
        Ok(())
    }

    fn refresh_intensities(&mut self) {
        if self.config.plan.independent_intensities {
            return;
        }
        let Some(g) = &self.global else { return };
        let ls = self.prior.lambda_star;
        for s in &mut self.stocks {
            let b = s.params.b.unwrap_or(self.prior.mu_b);
            for (t, l) in s.lambda.iter_mut().enumerate() {
                let x = b + s.loading.iter().zip(&g.f).map(|(w, fk)| w * fk[t + 1]).sum::<f64>();
                *l = ls * sigmoid(x);
            }
        }
    }

    /// One full sweep.
    pub fn step(&mut self) -> Result<()> {
        let it = self.iteration;
        let adapt = it < self.config.burn_in;
        if it == self.config.burn_in {
            self.reset_tallies();
        }
        let plan = self.config.plan;
        {
            let ctx = SweepCtx {
                panel: &self.panel,
                prior: &self.prior,
                plan,
                variant: self.config.variant,
                f: self.global.as_ref().map(|g| &g.f[..]),
                iteration: it,
                adapt,
            };
            let stocks = &mut self.stocks;
            match &self.pool {
                Some(pool) => pool.install(|| {
                    stocks
                        .par_iter_mut()
                        .enumerate()
                        .try_for_each(|(i, s)| sweep_stock(i, s, &ctx))
                })?,
                None => stocks
                    .iter_mut()
                    .enumerate()
                    .try_for_each(|(i, s)| sweep_stock(i, s, &ctx))?,
            }
        }

        if let Some(g) = self.global.as_mut() {
            if plan.factor_path || plan.factor_asis {
                let counts: Vec<&[u32]> = self.stocks.iter().map(|s| &s.n[..]).collect();
                let deltas: Vec<&[f64]> = (0..self.stocks.len()).map(|i| self.panel.deltas(i)).collect();
                let b: Vec<f64> = self
                    .stocks
                    .iter()
                    .map(|s| s.params.b.unwrap_or(self.prior.mu_b))
                    .collect();
                let w: Vec<&[f64]> = self.stocks.iter().map(|s| &s.loading[..]).collect();
                let lik = FactorLik {
                    counts: &counts,
                    deltas: &deltas,
                    b: &b,
                    w: &w,
                    lambda_star: self.prior.lambda_star,
                };
                if plan.factor_path {
                    let ctl = StepControl {
                        adapt,
                        update_hyper: plan.factor_hyper,
                    };
                    agrad_update_factors(&mut g.f, &mut g.alphas, &lik, &mut g.tuning, ctl, &mut self.global_rng)?;
                }
                if plan.factor_asis {
                    asis_factor_move(&mut g.f, &mut g.alphas, &lik, &mut g.asis, adapt, &mut self.global_rng);
                }
                g.tuning.check(it, "factor")?;
                if let Some(k) = g.f.iter().position(|fk| fk.iter().any(|v| !v.is_finite())) {
                    return Err(non_finite(it, format!("factor {k} path")));
                }
            }
        }
        if plan.factor_path || plan.factor_asis || plan.loadings {
            self.refresh_intensities();
        }

        if it >= self.config.burn_in && (it - self.config.burn_in + 1).is_multiple_of(self.config.thin) {
            self.record();
        }
        self.iteration += 1;
        Ok(())
    }

    fn reset_tallies(&mut self) {
        for s in &mut self.stocks {
            s.vol.gamma.reset_tally();
            s.vol.kappa.reset_tally();
            s.asis.mu.reset_tally();
            s.asis.log_sigma2.reset_tally();
            s.asis.phi = Default::default();
            s.loading_scale.reset_tally();
        }
        if let Some(g) = &mut self.global {
            g.tuning.gamma.reset_tally();
            g.tuning.kappa.reset_tally();
            g.asis.reset_tally();
        }
    }

    fn record(&mut self) {
        let p = self.stocks.len();
        let t = self.panel.n_times();
        let acc = &mut self.acc;
        if acc.jump_count.is_empty() {
            acc.jump_count = vec![vec![0.0; t]; p];
            acc.jump_any = vec![vec![0.0; t]; p];
            acc.lambda_sum = vec![vec![0.0; t]; p];
            acc.h_sum = vec![vec![0.0; t + 1]; p];
        }
        let jumps = self.config.variant.has_jumps();
        let mut ll = 0.0;
        for (i, s) in self.stocks.iter().enumerate() {
            let lik = VolatilityLik {
                returns: self.panel.returns(i),
                counts: jumps.then_some(&s.n[..]),
                mu_xi: s.params.mu_xi,
                sigma2_xi: s.params.sigma2_xi,
            };
            ll += lik.eval(&s.h);
            for k in 0..t {
                acc.jump_count[i][k] += s.n[k] as f64;
                acc.jump_any[i][k] += (s.n[k] > 0) as u8 as f64;
                acc.lambda_sum[i][k] += s.lambda[k];
            }
            for (a, h) in acc.h_sum[i].iter_mut().zip(&s.h) {
                *a += h;
            }
        }
        let retained = acc.iterations.len();
        acc.iterations.push(self.iteration);
        acc.log_lik.push(ll);
        acc.stock_params.push(self.stocks.iter().map(|s| s.params).collect());
        acc.h_last.push(self.stocks.iter().map(|s| s.h[t]).collect());
        let f = self.global.as_ref().map(|g| g.f.clone()).unwrap_or_default();
        acc.f_last.push(f.iter().map(|fk| fk[t]).collect());
        if let Some(fp) = self.global.as_ref().map(|g| FactorParams {
            loadings: self.stocks.iter().map(|s| s.loading.clone()).collect(),
            alphas: g.alphas.clone(),
            lambda_star: self.prior.lambda_star,
        }) {
            acc.factor_params.push(fp);
        }
        if self.config.path_stride > 0 && retained.is_multiple_of(self.config.path_stride) {
            acc.snapshots.push(PathSnapshot {
                iteration: self.iteration,
                h: self.stocks.iter().map(|s| s.h.clone()).collect(),
                n: self.stocks.iter().map(|s| s.n.clone()).collect(),
                f,
            });
        }
    }

    /// Runs sweeps until `target` iterations have completed, writing a
    /// checkpoint every `checkpoint_interval` sweeps when a path is set.
    pub fn run_until(&mut self, target: usize) -> Result<()> {
        while self.iteration < target {
            self.step()?;
            if let (Some(k), Some(path)) = (self.config.checkpoint_interval, &self.config.checkpoint_path) {
                if self.iteration.is_multiple_of(k) {
                    let path = path.clone();
                    self.checkpoint(&path)?;
                }
            }
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<PosteriorDraws> {
        self.run_until(self.config.iterations)?;
        Ok(self.finish())
    }

    pub fn acceptance(&self) -> AcceptanceReport {
        AcceptanceReport {
            stocks: self
                .stocks
                .iter()
                .map(|s| StockAcceptance {
                    path: s.vol.gamma.tally.rate(),
                    joint: s.vol.kappa.tally.rate(),
                    asis_mu: s.asis.mu.tally.rate(),
                    asis_sigma2: s.asis.log_sigma2.tally.rate(),
                    asis_phi: s.asis.phi.rate(),
                    loadings: s.loading_scale.tally.rate(),
                    gamma: s.vol.gamma(),
                    kappa: s.vol.kappa(),
                    non_finite: s.vol.non_finite,
                })
                .collect(),
            factors: self.global.as_ref().map(|g| FactorAcceptance {
                path: g.tuning.gamma.tally.rate(),
                joint: g.tuning.kappa.tally.rate(),
                asis: g.asis.tally.rate(),
                gamma: g.tuning.gamma(),
                kappa: g.tuning.kappa(),
                non_finite: g.tuning.non_finite,
            }),
        }
    }

    pub fn finish(self) -> PosteriorDraws {
        let acceptance = self.acceptance();
        let m = self.acc.iterations.len().max(1) as f64;
        let scale = |v: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            v.into_iter().map(|r| r.into_iter().map(|x| x / m).collect()).collect()
        };
        let acc = self.acc;
        PosteriorDraws {
            variant: self.config.variant,
            stock_ids: self.panel.stock_ids().to_vec(),
            iterations: acc.iterations,
            stock_params: acc.stock_params,
            factor_params: acc.factor_params,
            log_lik: acc.log_lik,
            h_last: acc.h_last,
            f_last: acc.f_last,
            jump_prob: scale(acc.jump_any),
            mean_jumps: scale(acc.jump_count),
            lambda_mean: scale(acc.lambda_sum),
            h_mean: scale(acc.h_sum),
            snapshots: acc.snapshots,
            acceptance,
            final_gamma: self.stocks.iter().map(|s| s.vol.gamma()).collect(),
            final_factor_gamma: self.global.as_ref().map(|g| g.tuning.gamma()),
        }
    }

    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct StateRef<'a> {
            iteration: usize,
            stocks: &'a [StockChain],
            global: &'a Option<GlobalChain>,
            global_rng: &'a SvRng,
            acc: &'a Accumulators,
        }
        let payload = serde_json::to_vec(&StateRef {
            iteration: self.iteration,
            stocks: &self.stocks,
            global: &self.global,
            global_rng: &self.global_rng,
            acc: &self.acc,
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        checkpoint::write_atomic(
            path,
            &checkpoint::encode(checkpoint::PayloadKind::Chain, self.hash, &payload),
        )
    }

    /// Resumes from a checkpoint written by a run with the same panel, prior
    /// and trajectory-relevant configuration.
    pub fn restore(path: &Path, panel: ReturnsPanel, prior: PriorSpec, config: McmcConfig) -> Result<Self> {
        #[derive(Deserialize)]
        struct State {
            iteration: usize,
            stocks: Vec<StockChain>,
            global: Option<GlobalChain>,
            global_rng: SvRng,
            acc: Accumulators,
        }
        let mut chain = Self::new(panel, prior, config)?;
        let bytes = std::fs::read(path)?;
        let payload = checkpoint::decode(&bytes, checkpoint::PayloadKind::Chain, Some(chain.hash))?;
        let state: State = serde_json::from_slice(payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if state.stocks.len() != chain.stocks.len() || state.global.is_some() != chain.global.is_some() {
            return Err(Error::Checkpoint("state shape does not match the run".into()));
        }
        chain.iteration = state.iteration;
        chain.stocks = state.stocks;
        chain.global = state.global;
        chain.global_rng = state.global_rng;
        chain.acc = state.acc;
        Ok(chain)
    }
}

/// Builds a chain and runs it to completion.
pub fn run_chain(panel: ReturnsPanel, prior: PriorSpec, config: McmcConfig) -> Result<PosteriorDraws> {
    Chain::new(panel, prior, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::business_days;
    use rand_distr::{Distribution, Normal};

    fn sv_panel(p: usize, t: usize, seed: u64) -> ReturnsPanel {
        let mut rng = stock_seed_rng(seed, 99);
        let returns: Vec<Vec<f64>> = (0..p)
            .map(|_| {
                let mut h = -0.5;
                (0..t)
                    .map(|_| {
                        h = -0.5 + 0.95 * (h + 0.5) + 0.2 * rng.sample::<f64, _>(StandardNormal);
                        (0.5 * h).exp() * rng.sample::<f64, _>(StandardNormal)
                            + if rng.random::<f64>() < 0.02 { Normal::new(0.0, 4.0).unwrap().sample(&mut rng) } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let ids = (0..p).map(|i| format!("S{i}")).collect();
        ReturnsPanel::from_calendar(returns, business_days(t), ids).unwrap()
    }

    fn config(variant: ModelVariant) -> McmcConfig {
        let mut c = McmcConfig::new(variant, 60, 20, 2, 17);
        c.path_stride = 5;
        c
    }

    #[test]
    fn worker_count_does_not_change_draws() {
        let panel = sv_panel(3, 120, 1);
        for v in [ModelVariant::Sv, ModelVariant::SvjIndependent, ModelVariant::SvjFactor] {
            let a = run_chain(panel.clone(), PriorSpec::default(), config(v)).unwrap();
            let mut c = config(v);
            c.workers = 3;
            let b = run_chain(panel.clone(), PriorSpec::default(), c).unwrap();
            assert_eq!(a.stock_params, b.stock_params, "{v}");
            assert_eq!(a.log_lik, b.log_lik);
            assert_eq!(a.n_draws(), 20);
            assert_eq!(a.snapshots.len(), 4);
        }
    }

    #[test]
    fn draws_file_round_trips_with_unused_blocks() {
        let dir = std::env::temp_dir().join(format!("svj-draws-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("draws.bin");
        let draws = run_chain(sv_panel(2, 60, 4), PriorSpec::default(), config(ModelVariant::Sv)).unwrap();
        assert!(draws.acceptance.stocks[0].loadings.is_nan());
        draws.save(&path, [7; 32]).unwrap();
        let back = PosteriorDraws::load(&path).unwrap();
        assert_eq!(back.stock_params, draws.stock_params);
        assert_eq!(back.snapshots, draws.snapshots);
        assert!(back.acceptance.stocks[0].loadings.is_nan());
        assert_eq!(back.acceptance.stocks[0].path, draws.acceptance.stocks[0].path);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let dir = std::env::temp_dir().join(format!("svj-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chain.ckpt");
        let panel = sv_panel(2, 80, 2);
        let cfg = config(ModelVariant::SvjFactor);
        let full = run_chain(panel.clone(), PriorSpec::default(), cfg.clone()).unwrap();

        let mut c = Chain::new(panel.clone(), PriorSpec::default(), cfg.clone()).unwrap();
        c.run_until(33).unwrap();
        c.checkpoint(&path).unwrap();
        drop(c);
        let mut other = cfg.clone();
        other.workers = 2;
        let resumed = Chain::restore(&path, panel.clone(), PriorSpec::default(), other).unwrap().run().unwrap();
        assert_eq!(full.stock_params, resumed.stock_params);
        assert_eq!(full.factor_params, resumed.factor_params);
        assert_eq!(full.log_lik, resumed.log_lik);

        let mut changed = cfg.clone();
        changed.seed += 1;
        assert!(matches!(
            Chain::restore(&path, panel, PriorSpec::default(), changed),
            Err(Error::Checkpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn frozen_plan_keeps_state() {
        let panel = sv_panel(2, 50, 3);
        let mut cfg = config(ModelVariant::SvjIndependent);
        cfg.plan = SweepPlan::frozen();
        let mut c = Chain::new(panel, PriorSpec::default(), cfg).unwrap();
        let before = (c.stock_params(), c.latent());
        for _ in 0..5 {
            c.step().unwrap();
        }
        assert_eq!(before.0, c.stock_params());
        assert_eq!(before.1, c.latent());
    }

    #[test]
    fn factor_chain_with_gamma_step_matches_independent_chain() {
        let panel = sv_panel(2, 90, 5);
        let ind = run_chain(panel.clone(), PriorSpec::default(), config(ModelVariant::SvjIndependent)).unwrap();
        let mut cfg = config(ModelVariant::SvjFactor);
        cfg.plan.loadings = false;
        cfg.plan.factor_path = false;
        cfg.plan.factor_hyper = false;
        cfg.plan.factor_asis = false;
        cfg.plan.independent_intensities = true;
        let fac = run_chain(panel, PriorSpec::default(), cfg).unwrap();
        let strip = |d: &PosteriorDraws| -> Vec<Vec<StockParams>> {
            d.stock_params
                .iter()
                .map(|row| row.iter().map(|p| StockParams { b: None, ..*p }).collect())
                .collect()
        };
        assert_eq!(strip(&ind), strip(&fac));
        assert_eq!(ind.log_lik, fac.log_lik);
        assert_eq!(ind.jump_prob, fac.jump_prob);
        assert_eq!(ind.lambda_mean, fac.lambda_mean);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let panel = sv_panel(1, 30, 4);
        let mut c = config(ModelVariant::Sv);
        c.thin = 0;
        assert!(Chain::new(panel.clone(), PriorSpec::default(), c).is_err());
        let mut c = config(ModelVariant::SvjFactor);
        c.n_factors = 0;
        assert!(Chain::new(panel.clone(), PriorSpec::default(), c).is_err());
        let mut c = config(ModelVariant::Sv);
        c.plan.jump_counts = true;
        assert!(Chain::new(panel, PriorSpec::default(), c).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [ModelVariant::Sv, ModelVariant::SvjIndependent, ModelVariant::SvjFactor] {
            assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
        }
        assert!("svx".parse::<ModelVariant>().is_err());
    }
}
