use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use svjump::mcmc::{Chain, ModelVariant, ParamName, PosteriorDraws};
use svjump::model::{FactorParams, PriorSpec, StockParams};

use super::{screening, write_ess, write_stock_by_date};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::ingest;
use crate::output::{num, RunDir};

/// Point estimates at which forecasts are made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMeans {
    pub variant: ModelVariant,
    pub stock_ids: Vec<String>,
    pub in_sample_end: NaiveDate,
    pub n_times: usize,
    pub prior: PriorSpec,
    pub stocks: Vec<StockParams>,
    pub factors: Option<FactorParams>,
    pub volatility_gamma: Vec<f64>,
    pub factor_gamma: Option<f64>,
}

fn mean_factors(draws: &PosteriorDraws) -> Option<FactorParams> {
    let first = draws.factor_params.first()?;
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
    Some(m)
}

pub fn run(cfg: &RunConfig, dir: &RunDir, resume: bool) -> CliResult<()> {
    let (full, report) = ingest(cfg.data_path()?, screening(cfg))?;
    let mut w = dir.csv("screening.csv")?;
    w.write_record(["stock", "traded_days", "longest_zero_run", "status"])?;
    for r in &report {
        let status = r.reason.map_or("kept".to_owned(), |x| {
            serde_json::to_value(x).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        });
        w.write_record([r.stock.clone(), r.traded_days.to_string(), r.longest_zero_run.to_string(), status])?;
    }
    w.flush().map_err(CliError::io(dir.file("screening.csv")))?;
    let dropped = report.iter().filter(|r| r.reason.is_some()).count();
    info!("screening kept {} of {} stocks", report.len() - dropped, report.len());

    let t_in = full
        .n_times()
        .checked_sub(cfg.holdout)
        .filter(|t| *t >= 2)
        .ok_or_else(|| CliError::Config(format!("holdout {} leaves no in-sample data", cfg.holdout)))?;
    let panel = full.slice_times(0, t_in)?;
    let prior = cfg.prior();
    let ckpt = dir.file("chain.ckpt");
    let mcmc = cfg.mcmc(Some(ckpt.clone()));
    let chain = if resume && ckpt.exists() {
        let c = Chain::restore(&ckpt, panel.clone(), prior, mcmc)?;
        info!("resuming from iteration {}", c.iteration());
        c
    } else {
        Chain::new(panel.clone(), prior, mcmc)?
    };
    let hash = chain.config_hash();
    info!(
        "fitting {} to {} stocks × {} days, {} sweeps",
        cfg.variant,
        panel.n_stocks(),
        panel.n_times(),
        cfg.iterations
    );
    let draws = chain.run()?;
    if draws.n_draws() == 0 {
        warn!("no draws retained after burn-in");
    }
    draws.save(&dir.file("draws.bin"), hash)?;

    let means = PosteriorMeans {
        variant: cfg.variant,
        stock_ids: draws.stock_ids.clone(),
        in_sample_end: *panel.dates().last().expect("non-empty panel"),
        n_times: t_in,
        prior,
        stocks: draws.posterior_mean_params(),
        factors: mean_factors(&draws),
        volatility_gamma: draws.final_gamma.clone(),
        factor_gamma: draws.final_factor_gamma,
    };
    dir.json("posterior_means.json", &means)?;

    let mut w = dir.csv("draws.csv")?;
    w.write_record(["iteration", "stock", "parameter", "value"])?;
    for (k, it) in draws.iterations.iter().enumerate() {
        let it = it.to_string();
        for (i, id) in draws.stock_ids.iter().enumerate() {
            for name in ParamName::ALL {
                if let Some(v) = name.get(&draws.stock_params[k][i]).filter(|_| name.applies(cfg.variant)) {
                    w.write_record([it.as_str(), id, name.label(), &num(v)])?;
                }
            }
        }
        if let Some(fp) = draws.factor_params.get(k) {
            for (j, a) in fp.alphas.iter().enumerate() {
                w.write_record([it.as_str(), "factor", &format!("alpha{}", j + 1), &num(*a)])?;
            }
            for (id, row) in draws.stock_ids.iter().zip(&fp.loadings) {
                for (j, x) in row.iter().enumerate() {
                    w.write_record([it.as_str(), id, &format!("w{}", j + 1), &num(*x)])?;
                }
            }
        }
    }
    w.flush().map_err(CliError::io(dir.file("draws.csv")))?;

    let rows: Vec<Vec<String>> = draws.jump_prob.iter().map(|r| r.iter().map(|p| num(*p)).collect()).collect();
    write_stock_by_date(&mut dir.csv("jump_probabilities.csv")?, &panel, &rows)?;
    write_ess(&mut dir.csv("ess.csv")?, &draws)?;

    let mut w = dir.csv("acceptance.csv")?;
    w.write_record(["stock", "path", "joint", "asis_mu", "asis_sigma2", "asis_phi", "loadings", "gamma", "kappa"])?;
    for (id, a) in draws.stock_ids.iter().zip(&draws.acceptance.stocks) {
        w.write_record([
            id.clone(),
            num(a.path),
            num(a.joint),
            num(a.asis_mu),
            num(a.asis_sigma2),
            num(a.asis_phi),
            num(a.loadings),
            num(a.gamma),
            num(a.kappa),
        ])?;
    }
    if let Some(f) = &draws.acceptance.factors {
        let nan = num(f64::NAN);
        w.write_record([
            "factor".to_owned(),
            num(f.path),
            num(f.joint),
            nan.clone(),
            nan.clone(),
            num(f.asis),
            nan,
            num(f.gamma),
            num(f.kappa),
        ])?;
    }
    w.flush().map_err(CliError::io(dir.file("acceptance.csv")))?;
    info!("kept {} draws", draws.n_draws());
    Ok(())
}
