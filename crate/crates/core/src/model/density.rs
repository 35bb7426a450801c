use super::{JumpSizePrior, PriorSpec, StockParams};
use crate::error::{domain, Result};
use crate::numeric::{ln_beta, ln_gamma, log_normal_pdf, log_sigmoid, LN_2PI};

/// λ* · σ(b + w·f), strictly inside (0, λ*) for finite arguments.
pub fn intensity_from_factors(b: f64, w_row: &[f64], f_t: &[f64], lambda_star: f64) -> f64 {
    log_intensity_from_factors(b, w_row, f_t, lambda_star).exp()
}

/// log λ_it evaluated through log σ to avoid overflow.
pub fn log_intensity_from_factors(b: f64, w_row: &[f64], f_t: &[f64], lambda_star: f64) -> f64 {
    debug_assert_eq!(w_row.len(), f_t.len());
    let x = b + w_row.iter().zip(f_t).map(|(w, f)| w * f).sum::<f64>();
    lambda_star.ln() + log_sigmoid(x)
}

/// Negative-binomial log-pmf of a jump count with the Gam(δ, c) intensity
/// integrated out over an increment of `delta_t` days.
pub fn nb_marginal_logpmf(n: u32, delta: f64, c: f64, delta_t: f64) -> Result<f64> {
    if !(delta > 0.0 && c > 0.0 && delta_t > 0.0) {
        return domain(format!(
            "negative binomial needs positive delta, c, increment (got {delta}, {c}, {delta_t})"
        ));
    }
    let n = n as f64;
    let log_beta = (c / (c + delta_t)).ln();
    let log_one_minus_beta = (delta_t / (c + delta_t)).ln();
    Ok(ln_gamma(delta + n) - ln_gamma(delta) - ln_gamma(n + 1.0)
        + delta * log_beta
        + n * log_one_minus_beta)
}

/// log N(r | n μ_ξ, e^h + n σ²_ξ): the return density with jump sizes
/// integrated out.
#[inline]
pub fn cell_loglik_marginal(r: f64, n: u32, h: f64, mu_xi: f64, sigma2_xi: f64) -> f64 {
    let nf = n as f64;
    let var = h.exp() + nf * sigma2_xi;
    let d = r - nf * mu_xi;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub(crate) fn log_prior_phi(phi: f64, prior: &PriorSpec) -> f64 {
    if !(phi.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = prior.phi_beta;
    let u = 0.5 * (phi + 1.0);
    (a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta(a, b) - std::f64::consts::LN_2
}

pub(crate) fn log_prior_sigma2_eta(s2: f64, prior: &PriorSpec) -> f64 {
    if !(s2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let (shape, rate) = prior.sigma2_eta_gamma;
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * s2.ln() - rate * s2
}

pub(crate) fn log_prior_mu(mu: f64, prior: &PriorSpec) -> f64 {
    log_normal_pdf(mu, 0.0, prior.mu_var)
}

pub(crate) fn log_inverse_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Sum of the log prior densities of one stock's static parameters;
/// −∞ outside the support.
pub fn log_prior_stock(params: &StockParams, prior: &PriorSpec, range_i: f64) -> f64 {
    let jp = JumpSizePrior::from_range(range_i);
    let mut lp = log_prior_mu(params.mu, prior)
        + log_prior_phi(params.phi, prior)
        + log_prior_sigma2_eta(params.sigma2_eta, prior)
        + log_normal_pdf(params.mu_xi, 0.0, jp.mean_var)
        + log_inverse_gamma(params.sigma2_xi, jp.ig_shape, jp.ig_scale);
    if let Some(b) = params.b {
        lp += log_normal_pdf(b, prior.mu_b, prior.sigma2_b);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}
