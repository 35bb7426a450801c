use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use svjump::forecast::{filter_stocks, run_ais, AisConfig, AisModel, AisOutput, CountPrior, PfConfig, PfJob};
use svjump::mcmc::{run_chain, McmcConfig, ModelVariant, PosteriorDraws};
use svjump::model::{FactorParams, LatentState, PriorSpec, ReturnsPanel, StockParams};
use svjump::simulate::{simulate_panel, PanelTruth};
use svjump::SvRng;

pub const MU: f64 = -0.85;
pub const PHI: f64 = 0.98;
pub const SIGMA2_ETA: f64 = 0.12 * 0.12;
pub const SIGMA2_XI: f64 = 3.5 * 3.5;
pub const MU_B: f64 = -2.4;

pub fn stock(mu_xi: f64, b: Option<f64>) -> StockParams {
    StockParams {
        mu: MU,
        phi: PHI,
        sigma2_eta: SIGMA2_ETA,
        mu_xi,
        sigma2_xi: SIGMA2_XI,
        b,
    }
}

/// Jump means alternate between −3 and 0.
pub fn independent_truth(p: usize) -> PanelTruth {
    let prior = PriorSpec::default();
    PanelTruth {
        variant: ModelVariant::SvjIndependent,
        stocks: (0..p).map(|i| stock(if i % 2 == 0 { -3.0 } else { 0.0 }, None)).collect(),
        factors: None,
        intensity_gamma: vec![(prior.delta, prior.c); p],
    }
}

pub fn sv_truth(p: usize) -> PanelTruth {
    PanelTruth {
        variant: ModelVariant::Sv,
        stocks: vec![stock(0.0, None); p],
        factors: None,
        intensity_gamma: Vec::new(),
    }
}

/// Standard normal loadings and b_i ~ N(−2.45, 1).
pub fn factor_truth(p: usize, alphas: &[f64], seed: u64) -> PanelTruth {
    let prior = factor_prior();
    let mut g = SvRng::seed_from_u64(seed ^ 0x5eed);
    let z = Normal::new(0.0, 1.0).expect("unit variance");
    PanelTruth {
        variant: ModelVariant::SvjFactor,
        stocks: (0..p).map(|_| stock(0.0, Some(-2.45 + z.sample(&mut g)))).collect(),
        factors: Some(FactorParams {
            loadings: (0..p).map(|_| alphas.iter().map(|_| z.sample(&mut g)).collect()).collect(),
            alphas: alphas.to_vec(),
            lambda_star: prior.lambda_star,
        }),
        intensity_gamma: Vec::new(),
    }
}

pub fn factor_prior() -> PriorSpec {
    PriorSpec {
        mu_b: MU_B,
        ..PriorSpec::default()
    }
}

pub struct Simulated {
    pub full: ReturnsPanel,
    pub latent: LatentState,
    /// In-sample length; the rest is held out.
    pub t_in: usize,
}

impl Simulated {
    pub fn new(truth: &PanelTruth, t_in: usize, holdout: usize, seed: u64) -> Self {
        let (full, latent) = simulate_panel(truth, t_in + holdout, seed).expect("valid truth");
        Self { full, latent, t_in }
    }

    pub fn in_sample(&self) -> ReturnsPanel {
        self.full.slice_times(0, self.t_in).expect("in range")
    }

    pub fn holdout(&self) -> usize {
        self.full.n_times() - self.t_in
    }
}

pub struct Fit {
    pub draws: PosteriorDraws,
    pub prior: PriorSpec,
}

pub fn fit(
    panel: ReturnsPanel,
    variant: ModelVariant,
    prior: PriorSpec,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    configure: impl FnOnce(&mut McmcConfig),
) -> Fit {
    let mut cfg = McmcConfig::new(variant, iterations, burn_in, 1, seed);
    configure(&mut cfg);
    Fit {
        draws: run_chain(panel, prior, cfg).expect("chain runs"),
        prior,
    }
}

fn mean_factors(draws: &PosteriorDraws) -> FactorParams {
    let first = &draws.factor_params[0];
    let n = draws.factor_params.len() as f64;
    let mut m = FactorParams {
        loadings: vec![vec![0.0; first.alphas.len()]; first.loadings.len()],
        alphas: vec![0.0; first.alphas.len()],
        lambda_star: first.lambda_star,
    };
    for d in &draws.factor_params {
        for (a, x) in m.alphas.iter_mut().zip(&d.alphas) {
            *a += x / n;
        }
        for (row, xs) in m.loadings.iter_mut().zip(&d.loadings) {
            for (w, x) in row.iter_mut().zip(xs) {
                *w += x / n;
            }
        }
    }
    m
}

/// Per-stock one-step log predictive densities `[stock][step]` of the
/// held-out returns by particle filtering from the final log-volatilities.
pub fn pf_forecast(fit: &Fit, data: &Simulated, particles: usize, seed: u64) -> Vec<Vec<f64>> {
    let draws = &fit.draws;
    let counts = match draws.variant {
        ModelVariant::Sv => CountPrior::NoJumps,
        _ => CountPrior::NegativeBinomial {
            delta: fit.prior.delta,
            c: fit.prior.c,
        },
    };
    let means = draws.posterior_mean_params();
    let p = means.len();
    let (t_in, ell) = (data.t_in, data.holdout());
    let h_last: Vec<Vec<f64>> = (0..p).map(|i| draws.h_last.iter().map(|d| d[i]).collect()).collect();
    let jobs: Vec<PfJob<'_>> = (0..p)
        .map(|i| PfJob {
            params: &means[i],
            counts,
            initial_h: &h_last[i],
            returns: &data.full.returns(i)[t_in..t_in + ell],
            deltas: &data.full.deltas(i)[t_in..t_in + ell],
        })
        .collect();
    let cfg = PfConfig {
        particles,
        ..PfConfig::default()
    };
    filter_stocks(&jobs, &cfg, seed, 1)
        .expect("filter runs")
        .iter()
        .map(|o| o.log_increments())
        .collect()
}

pub fn ais_forecast(fit: &Fit, data: &Simulated, trajectories: usize, bridge_sweeps: usize, seed: u64) -> AisOutput {
    let draws = &fit.draws;
    let p = draws.stock_ids.len();
    let (t_in, ell) = (data.t_in, data.holdout());
    let model = AisModel {
        stocks: draws.posterior_mean_params(),
        factors: mean_factors(draws),
        volatility_gamma: draws.final_gamma.clone(),
        factor_gamma: draws.final_factor_gamma.unwrap_or(0.2),
    };
    let cut = |range: std::ops::Range<usize>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (0..p)
            .map(|i| (data.full.returns(i)[range.clone()].to_vec(), data.full.deltas(i)[range.clone()].to_vec()))
            .unzip()
    };
    let (returns, deltas) = cut(0..t_in);
    let (future_returns, future_deltas) = cut(t_in..t_in + ell);
    let cfg = AisConfig {
        trajectories,
        bridge_sweeps,
        seed,
        ..AisConfig::default()
    };
    run_ais(
        model,
        returns,
        deltas,
        &draws.snapshots,
        &future_returns,
        &future_deltas,
        cfg,
    )
    .expect("AIS runs")
}
