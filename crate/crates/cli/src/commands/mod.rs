pub mod bf;
pub mod diagnose;
pub mod fit;
pub mod forecast;
pub mod simulate;

use std::path::Path;

use svjump::mcmc::PosteriorDraws;
use svjump::model::ReturnsPanel;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, Screening, ScreenRow};
use crate::output::num;

pub fn screening(cfg: &RunConfig) -> Screening {
    Screening {
        min_days: cfg.min_days,
        max_zero_run: cfg.max_zero_run,
    }
}

/// The screened panel restricted to `ids`, in that order.
pub fn panel_for(cfg: &RunConfig, ids: &[String]) -> CliResult<(ReturnsPanel, Vec<ScreenRow>)> {
    let (panel, report) = ingest(cfg.data_path()?, screening(cfg))?;
    let keep = ids
        .iter()
        .map(|id| {
            panel
                .stock_ids()
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| CliError::Data(format!("fitted stock {id} is not in the screened data")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((panel.select_stocks(&keep)?, report))
}

pub fn load_draws(fit_dir: &Path) -> CliResult<PosteriorDraws> {
    Ok(PosteriorDraws::load(&fit_dir.join("draws.bin"))?)
}

/// Stock × date matrix, one row per stock.
pub fn write_stock_by_date(
    w: &mut csv::Writer<impl std::io::Write>,
    panel: &ReturnsPanel,
    rows: &[Vec<String>],
) -> CliResult<()> {
    let mut header = vec!["stock".to_owned()];
    header.extend(panel.dates().iter().map(|d| d.to_string()));
    w.write_record(&header)?;
    for (id, row) in panel.stock_ids().iter().zip(rows) {
        w.write_record(std::iter::once(id.as_str()).chain(row.iter().map(String::as_str)))?;
    }
    w.flush().map_err(CliError::io("csv"))?;
    Ok(())
}

pub fn write_ess(w: &mut csv::Writer<impl std::io::Write>, draws: &PosteriorDraws) -> CliResult<()> {
    use svjump::mcmc::{effective_sample_size, ParamName};
    w.write_record(["stock", "parameter", "draws", "ess", "ar_order"])?;
    let mut row = |stock: &str, name: &str, chain: &[f64]| -> CliResult<()> {
        let (ess, order) = match effective_sample_size(chain) {
            Ok(e) => (num(e.ess), e.ar_order.to_string()),
            Err(_) => ("NaN".to_owned(), String::new()),
        };
        w.write_record([stock, name, &chain.len().to_string(), &ess, &order])?;
        Ok(())
    };
    for (i, id) in draws.stock_ids.iter().enumerate() {
        for name in ParamName::ALL.into_iter().filter(|n| n.applies(draws.variant)) {
            if let Some(chain) = draws.param_chain(i, name) {
                row(id, name.label(), &chain)?;
            }
        }
    }
    let k = draws.factor_params.first().map_or(0, |f| f.alphas.len());
    for j in 0..k {
        let chain: Vec<f64> = draws.factor_params.iter().map(|f| f.alphas[j]).collect();
        row("factor", &format!("alpha{}", j + 1), &chain)?;
    }
    w.flush().map_err(CliError::io("csv"))?;
    Ok(())
}
