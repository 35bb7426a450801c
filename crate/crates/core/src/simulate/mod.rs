//! Forward simulation of every model variant, prior draws, and the robust
//! empirical jump detector.

mod qn;

pub use qn::{median, qn_scale, qn_scale_naive};

use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::ModelVariant;
use crate::model::{
    business_days, intensity_from_factors, FactorParams, JumpSizePrior, LatentState, PriorSpec,
    ReturnsPanel, StockParams,
};
use crate::SvRng;

/// Ground truth for a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelTruth {
    pub variant: ModelVariant,
    pub stocks: Vec<StockParams>,
    pub factors: Option<FactorParams>,
    /// (δ_i, c_i) of each stock's Gamma intensities in the independent variant.
    pub intensity_gamma: Vec<(f64, f64)>,
}

impl PanelTruth {
    pub fn validate(&self) -> Result<()> {
        for s in &self.stocks {
            // a point mass at μ_ξ is allowed when simulating
            let check = if s.sigma2_xi == 0.0 { StockParams { sigma2_xi: 1.0, ..*s } } else { *s };
            check.validate()?;
        }
        match (self.variant, &self.factors) {
            (ModelVariant::SvjFactor, Some(f)) => {
                f.validate()?;
                if f.loadings.len() != self.stocks.len() {
                    return Err(Error::LengthMismatch("one loading row per stock".into()));
                }
                if self.stocks.iter().any(|s| s.b.is_none()) {
                    return Err(Error::Domain("factor variant needs an intercept b per stock".into()));
                }
            }
            (ModelVariant::SvjFactor, None) => {
                return Err(Error::Domain("factor variant needs factor parameters".into()))
            }
            _ => {}
        }
        if self.variant == ModelVariant::SvjIndependent {
            if self.intensity_gamma.len() != self.stocks.len() {
                return Err(Error::LengthMismatch("one intensity prior per stock".into()));
            }
            if self.intensity_gamma.iter().any(|(d, c)| !(*d > 0.0 && *c > 0.0)) {
                return Err(Error::Domain("intensity Gamma parameters must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Separate streams per component keep the noise of one component fixed
/// when another is switched off.
struct StockStreams {
    vol: SvRng,
    noise: SvRng,
    jumps: SvRng,
}

fn streams(seed: u64, i: usize) -> StockStreams {
    let make = |k: u64| {
        let mut r = SvRng::seed_from_u64(seed);
        r.set_stream(3 * i as u64 + k);
        r
    };
    StockStreams {
        vol: make(1),
        noise: make(2),
        jumps: make(3),
    }
}

fn ar1_path<R: Rng + ?Sized>(mean: f64, phi: f64, sigma2: f64, len: usize, rng: &mut R) -> Vec<f64> {
    let mut x = Vec::with_capacity(len);
    let z: f64 = rng.sample(StandardNormal);
    x.push(mean + z * (sigma2 / (1.0 - phi * phi)).sqrt());
    for t in 1..len {
        let z: f64 = rng.sample(StandardNormal);
        x.push(mean + phi * (x[t - 1] - mean) + sigma2.sqrt() * z);
    }
    x
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

/// Draws the latent state given the parameters, then the returns.
pub fn simulate_with_deltas(
    truth: &PanelTruth,
    deltas: &[Vec<f64>],
    seed: u64,
) -> Result<(Vec<Vec<f64>>, LatentState)> {
    truth.validate()?;
    let p = truth.stocks.len();
    if deltas.len() != p {
        return Err(Error::LengthMismatch("one increment row per stock".into()));
    }
    let t = deltas.first().map_or(0, Vec::len);
    let f = match &truth.factors {
        Some(fp) if truth.variant == ModelVariant::SvjFactor => {
            let mut rng = SvRng::seed_from_u64(seed);
            rng.set_stream(0);
            fp.alphas
                .iter()
                .map(|a| ar1_path(0.0, *a, 1.0, t + 1, &mut rng))
                .collect()
        }
        _ => Vec::new(),
    };
    let mut latent = LatentState {
        h: Vec::with_capacity(p),
        n: Vec::with_capacity(p),
        xi_sums: Vec::with_capacity(p),
        xi: Vec::with_capacity(p),
        f,
        lambda: Vec::with_capacity(p),
    };
    let mut returns = Vec::with_capacity(p);
    for (i, sp) in truth.stocks.iter().enumerate() {
        let mut st = streams(seed, i);
        let h = ar1_path(sp.mu, sp.phi, sp.sigma2_eta, t + 1, &mut st.vol);
        let lambda: Vec<f64> = match truth.variant {
            ModelVariant::Sv => vec![0.0; t],
            ModelVariant::SvjIndependent => {
                let (d, c) = truth.intensity_gamma[i];
                let g = Gamma::new(d, 1.0 / c).expect("validated");
                (0..t).map(|_| g.sample(&mut st.jumps)).collect()
            }
            ModelVariant::SvjFactor => {
                let fp = truth.factors.as_ref().expect("validated");
                let b = sp.b.expect("validated");
                (0..t)
                    .map(|k| {
                        let ft: Vec<f64> = latent.f.iter().map(|fk| fk[k + 1]).collect();
                        intensity_from_factors(b, &fp.loadings[i], &ft, fp.lambda_star)
                    })
                    .collect()
            }
        };
        let mut n = vec![0u32; t];
        let mut xi = vec![Vec::new(); t];
        if truth.variant.has_jumps() {
            let sd = sp.sigma2_xi.sqrt();
            for k in 0..t {
                n[k] = poisson(lambda[k] * deltas[i][k], &mut st.jumps);
                xi[k] = (0..n[k])
                    .map(|_| sp.mu_xi + sd * st.jumps.sample::<f64, _>(StandardNormal))
                    .collect();
            }
        }
        let r: Vec<f64> = (0..t)
            .map(|k| {
                let e: f64 = st.noise.sample(StandardNormal);
                (0.5 * h[k + 1]).exp() * e + xi[k].iter().sum::<f64>()
            })
            .collect();
        returns.push(r);
        latent.xi_sums.push(xi.iter().map(|c| c.iter().sum()).collect());
        latent.h.push(h);
        latent.n.push(n);
        latent.xi.push(xi);
        latent.lambda.push(lambda);
    }
    Ok((returns, latent))
}

/// Simulates a p×T panel on consecutive business days (Δ from the calendar).
pub fn simulate_panel(truth: &PanelTruth, t: usize, seed: u64) -> Result<(ReturnsPanel, LatentState)> {
    let dates = business_days(t);
    let ids: Vec<String> = (0..truth.stocks.len()).map(|i| format!("SIM{:03}", i + 1)).collect();
    let template = ReturnsPanel::from_calendar(vec![vec![0.0; t]; truth.stocks.len()], dates, ids)?;
    let deltas: Vec<Vec<f64>> = (0..truth.stocks.len()).map(|i| template.deltas(i).to_vec()).collect();
    let (returns, latent) = simulate_with_deltas(truth, &deltas, seed)?;
    Ok((template.with_returns(returns)?, latent))
}

/// Simulates with Δ_it = 1 throughout.
pub fn simulate_unit_increments(
    truth: &PanelTruth,
    t: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, LatentState)> {
    simulate_with_deltas(truth, &vec![vec![1.0; t]; truth.stocks.len()], seed)
}

/// r_it = exp(h_it/2) ε_it + Σ ξ_it given the latent state.
pub fn returns_given_latent<R: Rng + ?Sized>(latent: &LatentState, rng: &mut R) -> Vec<Vec<f64>> {
    latent
        .h
        .iter()
        .enumerate()
        .map(|(i, h)| {
            (0..h.len() - 1)
                .map(|k| {
                    let jump: f64 = latent.xi.get(i).map_or(0.0, |x| x[k].iter().sum());
                    (0.5 * h[k + 1]).exp() * rng.sample::<f64, _>(StandardNormal) + jump
                })
                .collect()
        })
        .collect()
}

/// One draw of every static parameter from the prior.
pub fn draw_from_prior<R: Rng + ?Sized>(
    prior: &PriorSpec,
    variant: ModelVariant,
    jump_priors: &[JumpSizePrior],
    n_factors: usize,
    rng: &mut R,
) -> (Vec<StockParams>, Option<FactorParams>) {
    let (a, b) = prior.phi_beta;
    let beta = Beta::new(a, b).expect("validated prior");
    let (shape, rate) = prior.sigma2_eta_gamma;
    let gam = Gamma::new(shape, 1.0 / rate).expect("validated prior");
    let factor = variant == ModelVariant::SvjFactor;
    let stocks = jump_priors
        .iter()
        .map(|jp| {
            let z = |rng: &mut R| rng.sample::<f64, _>(StandardNormal);
            let mu = prior.mu_var.sqrt() * z(rng);
            let phi = 2.0 * beta.sample(rng) - 1.0;
            let sigma2_eta = gam.sample(rng);
            let (mu_xi, sigma2_xi) = if variant.has_jumps() {
                let m = jp.mean_var.sqrt() * z(rng);
                let g: f64 = Gamma::new(jp.ig_shape, 1.0).expect("positive").sample(rng);
                (m, jp.ig_scale / g)
            } else {
                (0.0, 1.0)
            };
            let b = factor.then(|| prior.mu_b + prior.sigma2_b.sqrt() * z(rng));
            StockParams {
                mu,
                phi,
                sigma2_eta,
                mu_xi,
                sigma2_xi,
                b,
            }
        })
        .collect::<Vec<_>>();
    let factors = factor.then(|| FactorParams {
        loadings: (0..jump_priors.len())
            .map(|_| {
                (0..n_factors)
                    .map(|_| prior.sigma2_w.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect(),
        alphas: (0..n_factors).map(|_| rng.random_range(-1.0..1.0)).collect(),
        lambda_star: prior.lambda_star,
    });
    (stocks, factors)
}

/// Indices flagged by the robust three-scale rule.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JumpFlags {
    pub indices: Vec<usize>,
    /// The series has zero robust scale, so nothing can be flagged.
    pub degenerate: bool,
}

/// Flags t with |r_t − median| > 3·Q_n.
pub fn empirical_jump_detector(returns: &[f64]) -> Result<JumpFlags> {
    if returns.len() < 20 {
        return Err(Error::Domain(format!(
            "jump detector needs at least 20 returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("jump detector got a non-finite return".into()));
    }
    let scale = qn_scale(returns);
    if !(scale > 0.0) {
        return Ok(JumpFlags {
            indices: Vec::new(),
            degenerate: true,
        });
    }
    let med = median(returns);
    Ok(JumpFlags {
        indices: returns
            .iter()
            .enumerate()
            .filter(|(_, r)| (*r - med).abs() > 3.0 * scale)
            .map(|(t, _)| t)
            .collect(),
        degenerate: false,
    })
}
