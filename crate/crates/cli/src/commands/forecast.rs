use log::info;
use svjump::forecast::{filter_stocks, run_ais, AisConfig, AisModel, CountPrior, PfConfig, PfJob};
use svjump::mcmc::ModelVariant;

use super::fit::PosteriorMeans;
use super::{load_draws, panel_for};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, read_json, RunDir};

pub fn run(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let fit_dir = cfg.fit_path()?;
    let means: PosteriorMeans = read_json(&fit_dir.join("posterior_means.json"))?;
    let draws = load_draws(fit_dir)?;
    let (full, _) = panel_for(cfg, &means.stock_ids)?;
    let t_in = means.n_times;
    let ell = cfg.holdout;
    if ell == 0 || t_in + ell > full.n_times() {
        return Err(CliError::Config(format!(
            "holdout {ell} must be positive and fit within the {} dates after the in-sample end",
            full.n_times().saturating_sub(t_in)
        )));
    }
    if full.dates()[t_in - 1] != means.in_sample_end {
        return Err(CliError::Data(format!(
            "data no longer ends its in-sample period on {}",
            means.in_sample_end
        )));
    }
    let p = full.n_stocks();
    let future = |i: usize| (&full.returns(i)[t_in..t_in + ell], &full.deltas(i)[t_in..t_in + ell]);

    let (global, per_stock): (Vec<f64>, Vec<Vec<f64>>) = match means.variant {
        ModelVariant::Sv | ModelVariant::SvjIndependent => {
            let counts = if means.variant == ModelVariant::Sv {
                CountPrior::NoJumps
            } else {
                CountPrior::NegativeBinomial { delta: means.prior.delta, c: means.prior.c }
            };
            let h_last: Vec<Vec<f64>> = (0..p).map(|i| draws.h_last.iter().map(|d| d[i]).collect()).collect();
            let jobs: Vec<PfJob<'_>> = (0..p)
                .map(|i| {
                    let (returns, deltas) = future(i);
                    PfJob {
                        params: &means.stocks[i],
                        counts,
                        initial_h: &h_last[i],
                        returns,
                        deltas,
                    }
                })
                .collect();
            let pf = PfConfig {
                particles: cfg.particles,
                truncation: cfg.truncation,
                ..PfConfig::default()
            };
            let outs = filter_stocks(&jobs, &pf, cfg.seed, cfg.workers)?;
            for (id, o) in means.stock_ids.iter().zip(&outs) {
                let resampled = o.steps.iter().filter(|s| s.resampled).count();
                info!("{id}: resampled at {resampled} of {ell} steps");
            }
            let per: Vec<Vec<f64>> = outs.iter().map(|o| o.log_increments()).collect();
            let global = (0..ell).map(|j| per.iter().map(|s| s[j]).sum()).collect();
            (global, per)
        }
        ModelVariant::SvjFactor => {
            let model = AisModel {
                stocks: means.stocks.clone(),
                factors: means
                    .factors
                    .clone()
                    .ok_or_else(|| CliError::Data("factor fit without factor parameters".into()))?,
                volatility_gamma: means.volatility_gamma.clone(),
                factor_gamma: means.factor_gamma.unwrap_or(0.2),
            };
            let returns: Vec<Vec<f64>> = (0..p).map(|i| full.returns(i)[..t_in].to_vec()).collect();
            let deltas: Vec<Vec<f64>> = (0..p).map(|i| full.deltas(i)[..t_in].to_vec()).collect();
            let fr: Vec<Vec<f64>> = (0..p).map(|i| future(i).0.to_vec()).collect();
            let fd: Vec<Vec<f64>> = (0..p).map(|i| future(i).1.to_vec()).collect();
            let ais = AisConfig {
                trajectories: cfg.particles,
                bridge_sweeps: cfg.bridge_sweeps,
                truncation: cfg.truncation,
                workers: cfg.workers,
                seed: cfg.seed,
            };
            info!(
                "annealed importance sampling with {} trajectories from {} stored paths",
                ais.trajectories,
                draws.snapshots.len()
            );
            let out = run_ais(model, returns, deltas, &draws.snapshots, &fr, &fd, ais)?;
            (out.log_increments(), out.stock_log_increments())
        }
    };

    let mut w = dir.csv("forecast.csv")?;
    let mut header = vec!["step".to_owned(), "date".to_owned(), "log_pred".to_owned()];
    header.extend(means.stock_ids.iter().map(|id| format!("log_pred_{id}")));
    w.write_record(&header)?;
    for j in 0..ell {
        let mut row = vec![(j + 1).to_string(), full.dates()[t_in + j].to_string(), num(global[j])];
        row.extend(per_stock.iter().map(|s| num(s[j])));
        w.write_record(&row)?;
    }
    w.flush().map_err(CliError::io(dir.file("forecast.csv")))?;
    info!("log predictive density of the holdout: {}", global.iter().sum::<f64>());
    Ok(())
}
