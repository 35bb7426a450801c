use chrono::{Datelike, Weekday};
use log::info;

use super::{load_draws, panel_for, write_ess, write_stock_by_date};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, RunDir};

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

pub fn run(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let fit_dir = cfg.fit_path()?;
    let draws = load_draws(fit_dir)?;
    let (full, _) = panel_for(cfg, &draws.stock_ids)?;
    let t = draws.jump_prob.first().map_or(0, Vec::len);
    if t == 0 || t > full.n_times() {
        return Err(CliError::Data("stored jump probabilities do not match the data".into()));
    }
    let panel = full.slice_times(0, t)?;

    let rows: Vec<Vec<String>> = draws
        .jump_prob
        .iter()
        .map(|r| r.iter().map(|p| u8::from(*p > cfg.jump_threshold).to_string()).collect())
        .collect();
    write_stock_by_date(&mut dir.csv("jump_matrix.csv")?, &panel, &rows)?;
    let flagged: usize = draws.jump_prob.iter().flatten().filter(|p| **p > cfg.jump_threshold).count();
    info!("{flagged} cells with posterior jump probability above {}", cfg.jump_threshold);

    let mut w = dir.csv("weekday.csv")?;
    w.write_record([
        "weekday",
        "cells",
        "mean_delta",
        "expected_jumps",
        "jump_probability",
        "mean_intensity",
        "expected_jumps_per_day",
    ])?;
    for wd in WEEKDAYS {
        let cells: Vec<(usize, usize)> = (0..panel.n_stocks())
            .flat_map(|i| (0..t).map(move |k| (i, k)))
            .filter(|&(_, k)| panel.dates()[k].weekday() == wd)
            .collect();
        if cells.is_empty() {
            continue;
        }
        let n = cells.len() as f64;
        let mean = |f: &dyn Fn(usize, usize) -> f64| cells.iter().map(|&(i, k)| f(i, k)).sum::<f64>() / n;
        let delta = mean(&|i, k| panel.deltas(i)[k]);
        let jumps = mean(&|i, k| draws.mean_jumps[i][k]);
        w.write_record([
            wd.to_string(),
            cells.len().to_string(),
            num(delta),
            num(jumps),
            num(mean(&|i, k| draws.jump_prob[i][k])),
            num(mean(&|i, k| draws.lambda_mean[i][k])),
            num(jumps / delta),
        ])?;
    }
    w.flush().map_err(CliError::io(dir.file("weekday.csv")))?;
    write_ess(&mut dir.csv("ess.csv")?, &draws)
}
