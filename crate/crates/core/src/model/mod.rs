//! Domain types for a panel of stochastic-volatility-with-jumps models and
//! the density evaluations every sampler composes.
//!
//! Stock `i` at trading day `t` has return
//! `r_it = exp(h_it / 2) ε_it + Σ_κ ξ_it^κ`, AR(1) log-volatility `h_it`,
//! jump count `n_it ~ Poisson(Δ_it λ_it)` and Gaussian jump sizes. The
//! intensity `λ_it` is either drawn independently from `Gam(δ, c)` or driven
//! by latent AR(1) factors through `λ_it = λ* σ(b_i + W_i'F_t)`.

mod density;
mod elicit;

pub use density::{
    cell_loglik_marginal, intensity_from_factors, log_intensity_from_factors, log_prior_stock,
    nb_marginal_logpmf,
};
pub(crate) use density::{log_prior_mu, log_prior_phi, log_prior_sigma2_eta};
#[cfg(test)]
pub(crate) use density::log_inverse_gamma;
pub use elicit::{elicit_intensity_prior, intensity_prior_density, IntensityPriorSummary};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// p×T matrix of daily log-returns with calendar increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsPanel {
    returns: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    dates: Vec<NaiveDate>,
    stock_ids: Vec<String>,
}

impl ReturnsPanel {
    pub fn new(
        returns: Vec<Vec<f64>>,
        deltas: Vec<Vec<f64>>,
        dates: Vec<NaiveDate>,
        stock_ids: Vec<String>,
    ) -> Result<Self> {
        let p = returns.len();
        if p == 0 {
            return Err(Error::Panel("panel has no stocks".into()));
        }
        let t = dates.len();
        if t < 2 {
            return Err(Error::Panel(format!("need at least 2 dates, got {t}")));
        }
        if stock_ids.len() != p || deltas.len() != p {
            return Err(Error::Panel(format!(
                "{} stock ids / {} delta rows for {p} return rows",
                stock_ids.len(),
                deltas.len()
            )));
        }
        for (i, (r, d)) in returns.iter().zip(&deltas).enumerate() {
            if r.len() != t || d.len() != t {
                return Err(Error::Panel(format!(
                    "stock {} has {} returns and {} increments for {t} dates",
                    stock_ids[i],
                    r.len(),
                    d.len()
                )));
            }
            if let Some(pos) = r.iter().position(|x| !x.is_finite()) {
                return Err(Error::Panel(format!(
                    "stock {} has a missing or non-finite return at {}",
                    stock_ids[i], dates[pos]
                )));
            }
            if let Some(pos) = d.iter().position(|x| !(*x >= 1.0)) {
                return Err(Error::Panel(format!(
                    "stock {} has increment {} < 1 at {}",
                    stock_ids[i], d[pos], dates[pos]
                )));
            }
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Panel(format!(
                "dates not strictly increasing at {} -> {}",
                dates[w],
                dates[w + 1]
            )));
        }
        Ok(Self {
            returns,
            deltas,
            dates,
            stock_ids,
        })
    }

    /// Builds a panel whose increments are derived from the calendar.
    pub fn from_calendar(
        returns: Vec<Vec<f64>>,
        dates: Vec<NaiveDate>,
        stock_ids: Vec<String>,
    ) -> Result<Self> {
        let d = calendar_deltas(&dates)?;
        let deltas = vec![d; returns.len()];
        Self::new(returns, deltas, dates, stock_ids)
    }

    pub fn n_stocks(&self) -> usize {
        self.returns.len()
    }

    pub fn n_times(&self) -> usize {
        self.dates.len()
    }

    pub fn returns(&self, i: usize) -> &[f64] {
        &self.returns[i]
    }

    pub fn deltas(&self, i: usize) -> &[f64] {
        &self.deltas[i]
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    /// max_t r_it − min_t r_it.
    pub fn range(&self, i: usize) -> f64 {
        let r = &self.returns[i];
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Columns `[start, end)` as a new panel.
    pub fn slice_times(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_times() {
            return Err(Error::Panel(format!(
                "invalid time slice {start}..{end} of {}",
                self.n_times()
            )));
        }
        Self::new(
            self.returns.iter().map(|r| r[start..end].to_vec()).collect(),
            self.deltas.iter().map(|d| d[start..end].to_vec()).collect(),
            self.dates[start..end].to_vec(),
            self.stock_ids.clone(),
        )
    }

    /// Same calendar and stocks with new returns.
    pub fn with_returns(&self, returns: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(returns, self.deltas.clone(), self.dates.clone(), self.stock_ids.clone())
    }

    /// Jump-size prior of stock `i`, from its return range unless the prior
    /// fixes one.
    pub fn jump_prior(&self, i: usize, prior: &PriorSpec) -> JumpSizePrior {
        JumpSizePrior::from_range(prior.jump_range.unwrap_or_else(|| self.range(i)))
    }

    /// Keeps the listed stocks, in order.
    pub fn select_stocks(&self, keep: &[usize]) -> Result<Self> {
        Self::new(
            keep.iter().map(|&i| self.returns[i].clone()).collect(),
            keep.iter().map(|&i| self.deltas[i].clone()).collect(),
            self.dates.clone(),
            keep.iter().map(|&i| self.stock_ids[i].clone()).collect(),
        )
    }
}

/// Calendar-day gaps between consecutive trading dates. The first return has
/// no predecessor in the panel, so it gets the gap to the previous weekday.
pub fn calendar_deltas(dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dates.len());
    for (k, d) in dates.iter().enumerate() {
        let gap = if k == 0 {
            match d.weekday() {
                Weekday::Mon => 3,
                Weekday::Sun => 2,
                _ => 1,
            }
        } else {
            (*d - dates[k - 1]).num_days()
        };
        if gap < 1 {
            return Err(Error::Panel(format!(
                "dates not strictly increasing at {} -> {d}",
                dates[k - 1]
            )));
        }
        out.push(gap as f64);
    }
    Ok(out)
}

/// Consecutive business days starting at 2010-01-04 (a Monday).
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Per-stock static parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StockParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma2_eta: f64,
    pub mu_xi: f64,
    pub sigma2_xi: f64,
    /// Intensity intercept; only meaningful under the factor intensity model.
    pub b: Option<f64>,
}

impl StockParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::Domain(format!("phi = {} outside (-1, 1)", self.phi)));
        }
        if !(self.sigma2_eta > 0.0) {
            return Err(Error::Domain(format!(
                "sigma2_eta = {} must be positive",
                self.sigma2_eta
            )));
        }
        if !(self.sigma2_xi > 0.0) {
            return Err(Error::Domain(format!(
                "sigma2_xi = {} must be positive",
                self.sigma2_xi
            )));
        }
        if !self.mu.is_finite() || !self.mu_xi.is_finite() {
            return Err(Error::Domain("non-finite location parameter".into()));
        }
        Ok(())
    }
}

/// Dynamic-factor parameters for the intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    /// p×K loadings, row i is W_i.
    pub loadings: Vec<Vec<f64>>,
    /// Diagonal of A.
    pub alphas: Vec<f64>,
    pub lambda_star: f64,
}

impl FactorParams {
    pub fn n_factors(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alphas.iter().find(|a| !(a.abs() < 1.0)) {
            return Err(Error::Domain(format!("alpha = {a} outside (-1, 1)")));
        }
        if !(self.lambda_star > 0.0 && self.lambda_star <= 1.0) {
            return Err(Error::Domain(format!(
                "lambda_star = {} outside (0, 1]",
                self.lambda_star
            )));
        }
        let k = self.alphas.len();
        if let Some(row) = self.loadings.iter().find(|w| w.len() != k) {
            return Err(Error::Domain(format!(
                "loading row of length {} for {k} factors",
                row.len()
            )));
        }
        Ok(())
    }

    /// Stationary variances 1/(1−α_k²), the diagonal of Σ_F.
    pub fn stationary_variances(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| 1.0 / (1.0 - a * a)).collect()
    }
}

/// Latent states of the whole panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// p×(T+1) log-volatility paths, index 0..=T.
    pub h: Vec<Vec<f64>>,
    /// p×T jump counts.
    pub n: Vec<Vec<u32>>,
    /// p×T per-cell total jump size.
    pub xi_sums: Vec<Vec<f64>>,
    /// p×T individual jump sizes.
    pub xi: Vec<Vec<Vec<f64>>>,
    /// K×(T+1) factor paths.
    pub f: Vec<Vec<f64>>,
    /// p×T intensities that generated the counts.
    pub lambda: Vec<Vec<f64>>,
}

impl LatentState {
    pub fn check(&self) -> Result<()> {
        for (i, cells) in self.xi.iter().enumerate() {
            for (t, cell) in cells.iter().enumerate() {
                if cell.len() != self.n[i][t] as usize {
                    return Err(Error::Domain(format!(
                        "xi cell ({i},{t}) has {} entries for n = {}",
                        cell.len(),
                        self.n[i][t]
                    )));
                }
                let s: f64 = cell.iter().sum();
                if (s - self.xi_sums[i][t]).abs() > 1e-9 * (1.0 + s.abs()) {
                    return Err(Error::Domain(format!("xi sum mismatch at ({i},{t})")));
                }
            }
        }
        Ok(())
    }
}

/// Hyperparameters of every prior in the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Gam(δ, c) shape for independent intensities.
    pub delta: f64,
    /// Gam(δ, c) rate.
    pub c: f64,
    pub sigma2_w: f64,
    pub mu_b: f64,
    pub sigma2_b: f64,
    pub lambda_star: f64,
    /// Variance of the N(0, ·) prior on μ_i.
    pub mu_var: f64,
    /// (φ+1)/2 ~ Beta(a, b).
    pub phi_beta: (f64, f64),
    /// σ²_η ~ Gam(shape, rate).
    pub sigma2_eta_gamma: (f64, f64),
    /// Replaces the per-stock return range in the jump-size prior, which
    /// makes that prior independent of the data.
    #[serde(default)]
    pub jump_range: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            delta: 1.0,
            c: 50.0,
            sigma2_w: 0.5,
            mu_b: -5.0,
            sigma2_b: 1.0,
            lambda_star: 0.15,
            mu_var: 10.0,
            phi_beta: (20.0, 1.5),
            sigma2_eta_gamma: (0.5, 0.5),
            jump_range: None,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Domain(format!("delta = {} outside (0, 1]", self.delta)));
        }
        if !(self.c > 0.0) {
            return Err(Error::Domain(format!("c = {} must be positive", self.c)));
        }
        if !(self.sigma2_w > 0.0 && self.sigma2_b > 0.0) {
            return Err(Error::Domain("sigma2_w and sigma2_b must be positive".into()));
        }
        if !(self.lambda_star > 0.0 && self.lambda_star <= 1.0) {
            return Err(Error::Domain(format!(
                "lambda_star = {} outside (0, 1]",
                self.lambda_star
            )));
        }
        if !(self.mu_var > 0.0
            && self.phi_beta.0 > 0.0
            && self.phi_beta.1 > 0.0
            && self.sigma2_eta_gamma.0 > 0.0
            && self.sigma2_eta_gamma.1 > 0.0)
        {
            return Err(Error::Domain("volatility prior constants must be positive".into()));
        }
        if let Some(r) = self.jump_range {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("jump_range = {r} must be positive")));
            }
        }
        Ok(())
    }
}

/// Jump-size prior of one stock: μ_ξ ~ N(0, mean_var), σ²_ξ ~ IGam(shape, scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSizePrior {
    pub mean_var: f64,
    pub ig_shape: f64,
    pub ig_scale: f64,
}

impl JumpSizePrior {
    /// N(0, 5 range²) and IGam(3, range²/18).
    pub fn from_range(range: f64) -> Self {
        let r2 = range * range;
        Self {
            mean_var: 5.0 * r2,
            ig_shape: 3.0,
            ig_scale: r2 / 18.0,
        }
    }

    pub fn mean_sigma2(&self) -> f64 {
        self.ig_scale / (self.ig_shape - 1.0)
    }
}
