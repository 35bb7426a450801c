//! Log-volatility paths and their AR(1) parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::agrad::{agrad_step, mh_accept, AgradOutcome, HyperModel, PathLikelihood, StepControl};
use super::tuning::{AcceptanceTally, AdaptiveScale, AuxTuning, SCALAR_TARGET};
use crate::error::Result;
use crate::kernels::{build_ar1_precision, Ar1Precision};
use crate::model::{cell_loglik_marginal, log_prior_mu, log_prior_phi, log_prior_sigma2_eta, PriorSpec, StockParams};
use crate::numeric::{from_unbounded, log_jacobian_unbounded, log_normal_pdf, to_unbounded};

/// Returns of one stock with the jump sizes integrated out; `counts = None`
/// is the model without jumps.
#[derive(Debug, Clone, Copy)]
pub struct VolatilityLik<'a> {
    pub returns: &'a [f64],
    pub counts: Option<&'a [u32]>,
    pub mu_xi: f64,
    pub sigma2_xi: f64,
}

impl VolatilityLik<'_> {
    #[inline]
    fn n(&self, t: usize) -> u32 {
        self.counts.map_or(0, |c| c[t])
    }

    /// Σ_t log N(r_t | n_t μ_ξ, e^{h_t} + n_t σ²_ξ) over h_1..h_T.
    pub fn eval(&self, h: &[f64]) -> f64 {
        debug_assert_eq!(h.len(), self.returns.len() + 1);
        self.returns
            .iter()
            .enumerate()
            .map(|(t, &r)| cell_loglik_marginal(r, self.n(t), h[t + 1], self.mu_xi, self.sigma2_xi))
            .sum()
    }

    pub fn eval_grad(&self, h: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; h.len()];
        let mut total = 0.0;
        for (t, &r) in self.returns.iter().enumerate() {
            let n = self.n(t);
            let nf = n as f64;
            let eh = h[t + 1].exp();
            let v = eh + nf * self.sigma2_xi;
            let d = r - nf * self.mu_xi;
            total += -0.5 * (crate::numeric::LN_2PI + v.ln() + d * d / v);
            grad[t + 1] = 0.5 * eh / v * (d * d / v - 1.0);
        }
        (total, grad)
    }
}

impl PathLikelihood for VolatilityLik<'_> {
    fn log_lik(&self, paths: &[Vec<f64>]) -> f64 {
        self.eval(&paths[0])
    }

    fn log_lik_grad(&self, paths: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let (v, g) = self.eval_grad(&paths[0]);
        (v, vec![g])
    }
}

/// θ = (log((1+φ)/(1−φ)), log σ²_η) at a fixed level μ.
struct VolatilityHyper<'a> {
    mu: f64,
    length: usize,
    prior: &'a PriorSpec,
}

impl HyperModel for VolatilityHyper<'_> {
    fn precisions(&self, theta: &[f64]) -> Result<Vec<Ar1Precision>> {
        let p = build_ar1_precision(from_unbounded(theta[0]), theta[1].exp(), self.length)?;
        Ok(vec![p.with_mean(self.mu)])
    }

    fn log_prior_jacobian(&self, theta: &[f64]) -> f64 {
        let phi = from_unbounded(theta[0]);
        let s2 = theta[1].exp();
        log_prior_phi(phi, self.prior) + log_prior_sigma2_eta(s2, self.prior) + log_jacobian_unbounded(phi) + theta[1]
    }
}

/// Joint auxiliary-gradient update of (H_i, φ_i, σ²_iη) with μ_i fixed.
pub fn agrad_update_volatility<R: Rng + ?Sized>(
    h: &mut Vec<f64>,
    params: &mut StockParams,
    lik: &VolatilityLik<'_>,
    prior: &PriorSpec,
    tuning: &mut AuxTuning,
    ctl: StepControl,
    rng: &mut R,
) -> Result<AgradOutcome> {
    let hyper = VolatilityHyper {
        mu: params.mu,
        length: h.len(),
        prior,
    };
    let mut theta = [to_unbounded(params.phi), params.sigma2_eta.ln()];
    let mut paths = [std::mem::take(h)];
    let out = agrad_step(&mut paths, &mut theta, lik, &hyper, tuning, ctl, rng);
    *h = std::mem::take(&mut paths[0]);
    let out = out?;
    if out.joint_accepted {
        params.phi = from_unbounded(theta[0]);
        params.sigma2_eta = theta[1].exp();
    }
    Ok(out)
}

/// Mean and variance of the Gaussian full conditional of μ_i.
pub fn mu_full_conditional(h: &[f64], phi: f64, sigma2: f64, prior_var: f64) -> (f64, f64) {
    let t = (h.len() - 1) as f64;
    let s2 = sigma2 / (sigma2 / prior_var + (1.0 - phi * phi) + t * (1.0 - phi) * (1.0 - phi));
    let innov: f64 = h.windows(2).map(|w| w[1] - phi * w[0]).sum();
    let m = s2 * ((1.0 - phi * phi) * h[0] + (1.0 - phi) * innov) / sigma2;
    (m, s2)
}

pub fn sample_mu_volatility<R: Rng + ?Sized>(
    h: &[f64],
    phi: f64,
    sigma2: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> f64 {
    let (m, s2) = mu_full_conditional(h, phi, sigma2, prior.mu_var);
    Normal::new(m, s2.sqrt()).expect("finite").sample(rng)
}

/// h̃_t = (h_t − μ)/σ_η.
pub fn noncentre(h: &[f64], mu: f64, sigma2: f64) -> Vec<f64> {
    let s = sigma2.sqrt();
    h.iter().map(|v| (v - mu) / s).collect()
}

pub fn recentre(ht: &[f64], mu: f64, sigma2: f64) -> Vec<f64> {
    let s = sigma2.sqrt();
    ht.iter().map(|v| mu + s * v).collect()
}

/// Random-walk scales of the non-centred moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsisScales {
    pub mu: AdaptiveScale,
    pub log_sigma2: AdaptiveScale,
    pub phi: AcceptanceTally,
}

impl Default for AsisScales {
    fn default() -> Self {
        Self {
            mu: AdaptiveScale::new(0.1, SCALAR_TARGET),
            log_sigma2: AdaptiveScale::new(0.1, SCALAR_TARGET),
            phi: AcceptanceTally::default(),
        }
    }
}

/// Log-density of φ given a non-centred path, up to a constant that does
/// not depend on φ once the Gaussian proposal is factored out.
fn phi_residual_log_target(phi: f64, ht0: f64, prior: &PriorSpec) -> f64 {
    if !(phi.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    log_prior_phi(phi, prior) + log_normal_pdf(ht0, 0.0, 1.0 / (1.0 - phi * phi))
}

/// Interweaving move: updates (μ, σ²_η, φ) given the non-centred path and
/// maps the path back.
pub fn asis_volatility_move<R: Rng + ?Sized>(
    h: &mut [f64],
    params: &mut StockParams,
    lik: &VolatilityLik<'_>,
    prior: &PriorSpec,
    scales: &mut AsisScales,
    adapt: bool,
    rng: &mut R,
) {
    let ht = noncentre(h, params.mu, params.sigma2_eta);
    let mut cur = lik.eval(h);

    let mu_new = params.mu + scales.mu.scale() * rng.sample::<f64, _>(StandardNormal);
    let h_new = recentre(&ht, mu_new, params.sigma2_eta);
    let l_new = lik.eval(&h_new);
    let log_a = l_new - cur + log_prior_mu(mu_new, prior) - log_prior_mu(params.mu, prior);
    let ok = mh_accept(log_a, rng);
    if ok {
        params.mu = mu_new;
        cur = l_new;
    }
    scales.mu.record(ok, adapt);

    let ls = params.sigma2_eta.ln();
    let ls_new = ls + scales.log_sigma2.scale() * rng.sample::<f64, _>(StandardNormal);
    let s2_new = ls_new.exp();
    let h_new = recentre(&ht, params.mu, s2_new);
    let l_new = lik.eval(&h_new);
    let log_a = l_new - cur + log_prior_sigma2_eta(s2_new, prior) + ls_new
        - log_prior_sigma2_eta(params.sigma2_eta, prior)
        - ls;
    let ok = mh_accept(log_a, rng);
    if ok {
        params.sigma2_eta = s2_new;
    }
    scales.log_sigma2.record(ok, adapt);

    // the AR(1) transitions of h̃ make the Gaussian proposal exact up to
    // the prior and the stationary start
    let (mut a, mut b) = (0.0, 0.0);
    for w in ht.windows(2) {
        a += w[1] * w[0];
        b += w[0] * w[0];
    }
    if b > 0.0 {
        let phi_new = a / b + rng.sample::<f64, _>(StandardNormal) / b.sqrt();
        let log_a = phi_residual_log_target(phi_new, ht[0], prior)
            - phi_residual_log_target(params.phi, ht[0], prior);
        let ok = mh_accept(log_a, rng);
        if ok {
            params.phi = phi_new;
        }
        scales.phi.record(ok);
    }

    let back = recentre(&ht, params.mu, params.sigma2_eta);
    h.copy_from_slice(&back);
}
