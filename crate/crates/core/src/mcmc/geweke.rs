//! Joint-distribution ("getting it right") check: moments of the parameters
//! under forward simulation from the prior are compared with moments along
//! a chain that alternates one sweep with a fresh draw of the returns.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{effective_sample_size, Chain, McmcConfig, ModelVariant, SweepPlan};
use crate::error::{Error, Result};
use crate::model::{business_days, FactorParams, LatentState, PriorSpec, ReturnsPanel, StockParams};
use crate::simulate::{draw_from_prior, returns_given_latent, simulate_with_deltas, PanelTruth};
use crate::SvRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub variant: ModelVariant,
    pub n_stocks: usize,
    pub n_times: usize,
    pub n_factors: usize,
    /// Retained sweeps of the successive-conditional chain and forward draws.
    pub draws: usize,
    /// Adaptive sweeps before the proposal scales are frozen.
    pub burn_in: usize,
    /// Must fix `jump_range` so the jump-size prior does not depend on the data.
    pub prior: PriorSpec,
    pub plan: SweepPlan,
    /// Values of the blocks whose updates the plan switches off; blocks
    /// that are updated are drawn from the prior. Defaults to a moderate
    /// persistent stock and zero loadings with α = 0.5.
    pub fixed_stocks: Option<Vec<StockParams>>,
    pub fixed_factors: Option<FactorParams>,
    pub seed: u64,
    /// Family-wise level, split across all statistics by Bonferroni.
    pub level: f64,
}

impl GewekeConfig {
    pub fn new(variant: ModelVariant, n_stocks: usize, n_times: usize, draws: usize, seed: u64) -> Self {
        Self {
            variant,
            n_stocks,
            n_times,
            n_factors: usize::from(variant == ModelVariant::SvjFactor),
            draws,
            burn_in: 2000,
            prior: PriorSpec {
                jump_range: Some(4.0),
                ..PriorSpec::default()
            },
            plan: SweepPlan::for_variant(variant),
            fixed_stocks: None,
            fixed_factors: None,
            seed,
            level: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub forward_mean: f64,
    pub chain_mean: f64,
    pub chain_ess: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
    /// Two-sided critical |z| after the Bonferroni split.
    pub critical: f64,
}

impl GewekeReport {
    pub fn passes(&self) -> bool {
        self.stats.iter().all(|s| s.z.abs() <= self.critical)
    }

    pub fn worst(&self) -> Option<&GewekeStat> {
        self.stats.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
    }
}

/// Parameter blocks the plan updates.
#[derive(Clone, Copy)]
struct Included {
    mu: bool,
    vol_hyper: bool,
    jump_hyper: bool,
    loadings: bool,
    alpha: bool,
}

impl Included {
    fn of(cfg: &GewekeConfig) -> Self {
        let p = cfg.plan;
        Self {
            mu: p.volatility_mu || p.volatility_asis,
            vol_hyper: p.volatility_hyper || p.volatility_asis,
            jump_hyper: p.jump_hyper,
            loadings: p.loadings,
            alpha: p.factor_hyper || p.factor_asis,
        }
    }
}

/// Test functions: every sampled parameter (positive ones on the log
/// scale), a summary of each latent path, and their squares. Path means
/// pass through tanh because their fourth moments are infinite when the
/// persistence prior has mass near one.
fn statistics(
    variant: ModelVariant,
    params: &[StockParams],
    factors: Option<&FactorParams>,
    latent: &LatentState,
    inc: Included,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, p) in params.iter().enumerate() {
        if inc.mu {
            out.push((format!("mu[{i}]"), p.mu));
        }
        if inc.vol_hyper {
            out.push((format!("phi[{i}]"), p.phi));
            out.push((format!("log_sigma2_eta[{i}]"), p.sigma2_eta.ln()));
        }
        if inc.jump_hyper && variant.has_jumps() {
            out.push((format!("mu_xi[{i}]"), p.mu_xi));
            out.push((format!("log_sigma2_xi[{i}]"), p.sigma2_xi.ln()));
        }
        if let (true, Some(b)) = (inc.loadings, p.b) {
            out.push((format!("b[{i}]"), b));
        }
        let h = &latent.h[i];
        out.push((format!("tanh_h_mean[{i}]"), (h.iter().sum::<f64>() / h.len() as f64).tanh()));
        if variant.has_jumps() {
            out.push((format!("n_total[{i}]"), latent.n[i].iter().map(|n| *n as f64).sum()));
        }
    }
    if let Some(fp) = factors {
        for (k, a) in fp.alphas.iter().enumerate() {
            if inc.alpha {
                out.push((format!("alpha[{k}]"), *a));
            }
            if inc.loadings {
                for (i, row) in fp.loadings.iter().enumerate() {
                    out.push((format!("w[{i},{k}]"), row[k]));
                }
            }
            let f = &latent.f[k];
            out.push((format!("tanh_f_mean[{k}]"), (f.iter().sum::<f64>() / f.len() as f64).tanh()));
        }
    }
    let squares: Vec<(String, f64)> = out.iter().map(|(n, v)| (format!("{n}^2"), v * v)).collect();
    out.extend(squares);
    out
}

fn normal_upper_quantile(tail: f64) -> f64 {
    // solve ½ erfc(z/√2) = tail by bisection
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(mid / std::f64::consts::SQRT_2) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parameters, factor parameters, returns and latent state of one joint draw.
type ForwardDraw = (Vec<StockParams>, Option<FactorParams>, Vec<Vec<f64>>, LatentState);

fn forward_draw(
    cfg: &GewekeConfig,
    deltas: &[Vec<f64>],
    jp: &[crate::model::JumpSizePrior],
    rng: &mut SvRng,
    seed: u64,
) -> Result<ForwardDraw> {
    let (mut stocks, mut factors) = draw_from_prior(&cfg.prior, cfg.variant, jp, cfg.n_factors, rng);
    let inc = Included::of(cfg);
    let default_stock = StockParams {
        mu: -0.5,
        phi: 0.9,
        sigma2_eta: 0.1,
        mu_xi: 0.0,
        sigma2_xi: 2.0,
        b: Some(cfg.prior.mu_b),
    };
    for (i, s) in stocks.iter_mut().enumerate() {
        let f = cfg.fixed_stocks.as_ref().map_or(default_stock, |v| v[i]);
        if !inc.mu {
            s.mu = f.mu;
        }
        if !inc.vol_hyper {
            s.phi = f.phi;
            s.sigma2_eta = f.sigma2_eta;
        }
        if !inc.jump_hyper && cfg.variant.has_jumps() {
            s.mu_xi = f.mu_xi;
            s.sigma2_xi = f.sigma2_xi;
        }
        if !inc.loadings && s.b.is_some() {
            s.b = f.b.or(Some(cfg.prior.mu_b));
        }
    }
    if let Some(fp) = factors.as_mut() {
        let fixed = cfg.fixed_factors.clone().unwrap_or_else(|| FactorParams {
            loadings: vec![vec![0.0; cfg.n_factors]; cfg.n_stocks],
            alphas: vec![0.5; cfg.n_factors],
            lambda_star: cfg.prior.lambda_star,
        });
        if !inc.loadings {
            fp.loadings = fixed.loadings;
        }
        if !inc.alpha {
            fp.alphas = fixed.alphas;
        }
    }
    let truth = PanelTruth {
        variant: cfg.variant,
        stocks: stocks.clone(),
        factors: factors.clone(),
        intensity_gamma: vec![(cfg.prior.delta, cfg.prior.c); cfg.n_stocks],
    };
    let (returns, latent) = simulate_with_deltas(&truth, deltas, seed)?;
    Ok((stocks, factors, returns, latent))
}

pub fn run_geweke(cfg: &GewekeConfig) -> Result<GewekeReport> {
    if cfg.prior.jump_range.is_none() {
        return Err(Error::Domain("the joint-distribution check needs a fixed jump range".into()));
    }
    if cfg.draws < 100 {
        return Err(Error::Domain("at least 100 draws are needed".into()));
    }
    let dates = business_days(cfg.n_times);
    let ids: Vec<String> = (0..cfg.n_stocks).map(|i| format!("G{i}")).collect();
    let template = ReturnsPanel::from_calendar(vec![vec![0.0; cfg.n_times]; cfg.n_stocks], dates, ids)?;
    let deltas: Vec<Vec<f64>> = (0..cfg.n_stocks).map(|i| template.deltas(i).to_vec()).collect();
    let jp: Vec<_> = (0..cfg.n_stocks).map(|i| template.jump_prior(i, &cfg.prior)).collect();
    let inc = Included::of(cfg);

    let mut rng = SvRng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut forward: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for d in 0..cfg.draws {
        let seed = cfg.seed.wrapping_add(1 + d as u64);
        let (s, f, _, lat) = forward_draw(cfg, &deltas, &jp, &mut rng, seed)?;
        let st = statistics(cfg.variant, &s, f.as_ref(), &lat, inc);
        if names.is_empty() {
            names = st.iter().map(|(n, _)| n.clone()).collect();
            forward = vec![Vec::with_capacity(cfg.draws); st.len()];
        }
        for (col, (_, v)) in forward.iter_mut().zip(st) {
            col.push(v);
        }
    }

    let (s0, f0, r0, lat0) = forward_draw(cfg, &deltas, &jp, &mut rng, cfg.seed ^ 0x5eed)?;
    let mut mc = McmcConfig::new(cfg.variant, cfg.burn_in + cfg.draws, cfg.burn_in, 1, cfg.seed);
    mc.n_factors = cfg.n_factors;
    mc.plan = cfg.plan;
    let mut chain = Chain::new(template.with_returns(r0)?, cfg.prior, mc)?;
    chain.set_state(&s0, f0.as_ref(), &lat0)?;
    let mut data_rng = SvRng::seed_from_u64(cfg.seed);
    data_rng.set_stream(u64::MAX - 1);
    let mut chain_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.draws); names.len()];
    for it in 0..cfg.burn_in + cfg.draws {
        chain.step()?;
        let lat = chain.latent();
        chain.set_returns(returns_given_latent(&lat, &mut data_rng))?;
        if it >= cfg.burn_in {
            let params = chain.stock_params();
            let st = statistics(cfg.variant, &params, chain.factor_params().as_ref(), &lat, inc);
            for (col, (_, v)) in chain_cols.iter_mut().zip(st) {
                col.push(v);
            }
        }
    }

    let critical = normal_upper_quantile(cfg.level / (2.0 * names.len() as f64));
    let mut stats = Vec::with_capacity(names.len());
    for ((name, fw), ch) in names.into_iter().zip(&forward).zip(&chain_cols) {
        let n = fw.len() as f64;
        let m1 = fw.iter().sum::<f64>() / n;
        let v1 = fw.iter().map(|x| (x - m1).powi(2)).sum::<f64>() / (n - 1.0);
        let m2 = ch.iter().sum::<f64>() / ch.len() as f64;
        let v2 = ch.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / (ch.len() as f64 - 1.0);
        let ess = effective_sample_size(ch)?.ess;
        let se = (v1 / n + v2 / ess).sqrt();
        let z = if se > 0.0 { (m1 - m2) / se } else if m1 == m2 { 0.0 } else { f64::INFINITY };
        stats.push(GewekeStat {
            name,
            forward_mean: m1,
            chain_mean: m2,
            chain_ess: ess,
            z,
        });
    }
    Ok(GewekeReport { stats, critical })
}
