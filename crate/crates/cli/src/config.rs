//! Run configuration: one flat TOML table, overridable key by key from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svjump::mcmc::{McmcConfig, ModelVariant};
use svjump::model::PriorSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub n_factors: usize,

    pub delta: f64,
    pub c: f64,
    pub sigma2_w: f64,
    pub mu_b: f64,
    pub sigma2_b: f64,
    pub lambda_star: f64,
    pub mu_var: f64,
    pub phi_beta_a: f64,
    pub phi_beta_b: f64,
    pub sigma2_eta_shape: f64,
    pub sigma2_eta_rate: f64,

    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,
    /// Sweeps between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    /// Posterior latent paths kept for the factor model's forecasts.
    pub path_snapshots: usize,

    pub data: Option<PathBuf>,
    /// Trailing dates held out of the fit and used for forecasting.
    pub holdout: usize,
    pub min_days: usize,
    pub max_zero_run: usize,

    /// Fit run directory read by `forecast` and `diagnose`.
    pub fit_dir: Option<PathBuf>,
    pub particles: usize,
    pub bridge_sweeps: usize,
    pub truncation: u32,
    pub jump_threshold: f64,

    pub sim_stocks: usize,
    pub sim_days: usize,
    pub sim_mu: f64,
    pub sim_phi: f64,
    pub sim_sigma_eta: f64,
    pub sim_mu_xi: f64,
    pub sim_sigma_xi: f64,
    pub sim_b: f64,
    pub sim_alphas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prior = PriorSpec::default();
        Self {
            variant: ModelVariant::SvjIndependent,
            n_factors: 2,
            delta: prior.delta,
            c: prior.c,
            sigma2_w: prior.sigma2_w,
            mu_b: prior.mu_b,
            sigma2_b: prior.sigma2_b,
            lambda_star: prior.lambda_star,
            mu_var: prior.mu_var,
            phi_beta_a: prior.phi_beta.0,
            phi_beta_b: prior.phi_beta.1,
            sigma2_eta_shape: prior.sigma2_eta_gamma.0,
            sigma2_eta_rate: prior.sigma2_eta_gamma.1,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            seed: 1,
            workers: 1,
            checkpoint_interval: 0,
            path_snapshots: 100,
            data: None,
            holdout: 0,
            min_days: 1000,
            max_zero_run: 10,
            fit_dir: None,
            particles: 1000,
            bridge_sweeps: 5,
            truncation: 10,
            jump_threshold: 0.5,
            sim_stocks: 4,
            sim_days: 1500,
            sim_mu: -0.85,
            sim_phi: 0.98,
            sim_sigma_eta: 0.12,
            sim_mu_xi: 0.0,
            sim_sigma_xi: 3.5,
            sim_b: -2.4,
            sim_alphas: vec![0.85, -0.45],
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()))
}

impl RunConfig {
    /// Reads `path` (or starts from the defaults) and applies `key=value`
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
            table.insert(k.trim().to_owned(), parse_override(v.trim()));
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        self.prior().validate()?;
        if !(0.0..=1.0).contains(&self.jump_threshold) {
            return Err(CliError::Config(format!(
                "jump_threshold {} outside [0, 1]",
                self.jump_threshold
            )));
        }
        if self.particles == 0 {
            return Err(CliError::Config("particles must be positive".into()));
        }
        Ok(())
    }

    pub fn factors(&self) -> usize {
        if self.variant == ModelVariant::SvjFactor {
            self.n_factors
        } else {
            0
        }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec {
            delta: self.delta,
            c: self.c,
            sigma2_w: self.sigma2_w,
            mu_b: self.mu_b,
            sigma2_b: self.sigma2_b,
            lambda_star: self.lambda_star,
            mu_var: self.mu_var,
            phi_beta: (self.phi_beta_a, self.phi_beta_b),
            sigma2_eta_gamma: (self.sigma2_eta_shape, self.sigma2_eta_rate),
            jump_range: None,
        }
    }

    pub fn mcmc(&self, checkpoint: Option<PathBuf>) -> McmcConfig {
        let mut m = McmcConfig::new(self.variant, self.iterations, self.burn_in, self.thin, self.seed);
        m.n_factors = self.factors();
        m.workers = self.workers;
        if self.checkpoint_interval > 0 {
            m.checkpoint_interval = Some(self.checkpoint_interval);
            m.checkpoint_path = checkpoint;
        }
        if self.variant == ModelVariant::SvjFactor && self.path_snapshots > 0 {
            let retained = self.iterations.saturating_sub(self.burn_in) / self.thin.max(1);
            m.path_stride = (retained / self.path_snapshots).max(1);
        }
        m
    }

    /// Input paths made absolute so the snapshot reruns from anywhere.
    pub fn absolutize(&mut self) -> CliResult<()> {
        for p in [&mut self.data, &mut self.fit_dir].into_iter().flatten() {
            *p = std::path::absolute(&*p).map_err(CliError::io(p.clone()))?;
        }
        Ok(())
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Config("`data` (input CSV) is not set".into()))
    }

    pub fn fit_path(&self) -> CliResult<&Path> {
        self.fit_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("`fit_dir` (fit run directory) is not set".into()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
