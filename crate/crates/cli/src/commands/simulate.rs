use log::info;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use svjump::mcmc::ModelVariant;
use svjump::model::{FactorParams, StockParams};
use svjump::simulate::{simulate_panel, PanelTruth};
use svjump::SvRng;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, RunDir};

/// Stream for the loadings, away from the simulator's own streams.
const LOADING_STREAM: u64 = 1 << 50;

pub fn truth(cfg: &RunConfig) -> CliResult<PanelTruth> {
    let factor = cfg.variant == ModelVariant::SvjFactor;
    let stock = StockParams {
        mu: cfg.sim_mu,
        phi: cfg.sim_phi,
        sigma2_eta: cfg.sim_sigma_eta * cfg.sim_sigma_eta,
        mu_xi: cfg.sim_mu_xi,
        sigma2_xi: cfg.sim_sigma_xi * cfg.sim_sigma_xi,
        b: factor.then_some(cfg.sim_b),
    };
    let factors = if factor {
        let mut rng = SvRng::seed_from_u64(cfg.seed);
        rng.set_stream(LOADING_STREAM);
        let w = Normal::new(0.0, cfg.sigma2_w.sqrt()).map_err(|e| CliError::Config(e.to_string()))?;
        Some(FactorParams {
            loadings: (0..cfg.sim_stocks)
                .map(|_| cfg.sim_alphas.iter().map(|_| w.sample(&mut rng)).collect())
                .collect(),
            alphas: cfg.sim_alphas.clone(),
            lambda_star: cfg.lambda_star,
        })
    } else {
        None
    };
    let truth = PanelTruth {
        variant: cfg.variant,
        stocks: vec![stock; cfg.sim_stocks],
        factors,
        intensity_gamma: vec![(cfg.delta, cfg.c); cfg.sim_stocks],
    };
    truth.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(truth)
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let truth = truth(cfg)?;
    let (panel, latent) = simulate_panel(&truth, cfg.sim_days, cfg.seed)?;
    info!(
        "simulated {} stocks × {} days of the {} model",
        panel.n_stocks(),
        panel.n_times(),
        cfg.variant
    );

    let mut w = dir.csv("returns.csv")?;
    let mut header = vec!["date".to_owned()];
    header.extend(panel.stock_ids().iter().cloned());
    w.write_record(&header)?;
    for (t, d) in panel.dates().iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend((0..panel.n_stocks()).map(|i| num(panel.returns(i)[t])));
        w.write_record(&row)?;
    }
    w.flush().map_err(CliError::io(dir.file("returns.csv")))?;

    let mut w = dir.csv("latent.csv")?;
    w.write_record(["stock", "date", "h", "n", "xi_sum", "lambda"])?;
    for (i, id) in panel.stock_ids().iter().enumerate() {
        for (t, d) in panel.dates().iter().enumerate() {
            w.write_record([
                id.clone(),
                d.to_string(),
                num(latent.h[i][t + 1]),
                latent.n[i][t].to_string(),
                num(latent.xi_sums[i][t]),
                num(latent.lambda[i][t]),
            ])?;
        }
    }
    w.flush().map_err(CliError::io(dir.file("latent.csv")))?;

    if !latent.f.is_empty() {
        let mut w = dir.csv("factors.csv")?;
        let mut header = vec!["t".to_owned()];
        header.extend((1..=latent.f.len()).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for t in 0..latent.f[0].len() {
            let mut row = vec![t.to_string()];
            row.extend(latent.f.iter().map(|fk| num(fk[t])));
            w.write_record(&row)?;
        }
        w.flush().map_err(CliError::io(dir.file("factors.csv")))?;
    }
    dir.json("truth.json", &truth)
}
