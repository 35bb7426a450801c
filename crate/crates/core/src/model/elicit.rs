//! Moments and mode of the prior that the factor model induces on a single
//! intensity. With α_k at their prior mean, y = logit(λ/λ*) is Gaussian with
//! mean μ_b and variance Kσ²_w + σ²_b.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{brent, integrate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityPriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub mode: f64,
}

/// Density of λ ∈ (0, λ*) when logit(λ/λ*) ~ N(mu_y, sigma2_y).
pub fn intensity_prior_density(lambda: f64, mu_y: f64, sigma2_y: f64, lambda_star: f64) -> f64 {
    if !(lambda > 0.0 && lambda < lambda_star) {
        return 0.0;
    }
    let y = (lambda / (lambda_star - lambda)).ln();
    let z = y - mu_y;
    lambda_star * (-0.5 * z * z / sigma2_y).exp()
        / ((2.0 * std::f64::consts::PI * sigma2_y).sqrt() * lambda * (lambda_star - lambda))
}

/// Residual of the stationarity condition for the density's mode:
/// logit(λ/λ*) − (λ*μ_y + σ²_y(2λ − λ*))/λ*.
fn mode_residual(lambda: f64, mu_y: f64, sigma2_y: f64, lambda_star: f64) -> f64 {
    (lambda / (lambda_star - lambda)).ln()
        - (lambda_star * mu_y + sigma2_y * (2.0 * lambda - lambda_star)) / lambda_star
}

fn find_mode(mu_y: f64, sigma2_y: f64, lambda_star: f64) -> Result<f64> {
    let g = |l: f64| mode_residual(l, mu_y, sigma2_y, lambda_star);
    // The residual is increasing except on (l-, l+) when σ²_y > 2, so the
    // monotone pieces are separated by its two critical points.
    let mut breaks = vec![0.0];
    if sigma2_y > 2.0 {
        let half = 0.5 * lambda_star;
        let w = half * (1.0 - 2.0 / sigma2_y).sqrt();
        breaks.push(half - w);
        breaks.push(half + w);
    }
    breaks.push(lambda_star);
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let mut lo = w[0];
        let mut hi = w[1];
        if lo == 0.0 {
            lo = lambda_star * 1e-300;
        }
        if hi == lambda_star {
            hi = lambda_star * (1.0 - f64::EPSILON);
        }
        let (glo, ghi) = (g(lo), g(hi));
        if !glo.is_finite() || !ghi.is_finite() {
            return Err(Error::RootFinding(format!(
                "mode residual not finite on [{lo:e}, {hi:e}]"
            )));
        }
        if glo == 0.0 {
            roots.push(lo);
        } else if glo.signum() != ghi.signum() {
            let mut r = brent(g, lo, hi, 0.0)?;
            // one Newton polish; the residual derivative is λ*/(λ(λ*−λ)) − 2σ²/λ*
            let d = lambda_star / (r * (lambda_star - r)) - 2.0 * sigma2_y / lambda_star;
            let step = g(r) / d;
            if d.abs() > 0.0 && (r - step) > lo && (r - step) < hi {
                let cand = r - step;
                if g(cand).abs() < g(r).abs() {
                    r = cand;
                }
            }
            roots.push(r);
        }
    }
    if roots.is_empty() {
        return Err(Error::RootFinding("mode equation has no root in (0, λ*)".into()));
    }
    let best = roots
        .into_iter()
        .max_by(|a, b| {
            intensity_prior_density(*a, mu_y, sigma2_y, lambda_star)
                .total_cmp(&intensity_prior_density(*b, mu_y, sigma2_y, lambda_star))
        })
        .expect("non-empty");
    Ok(best)
}

/// Mean, variance and mode of the factor-induced prior on λ_it.
///
/// Moments come from adaptive quadrature on (0, λ*) split at the mode; the
/// mode is the density-maximising root of its stationarity equation.
pub fn elicit_intensity_prior(
    mu_b: f64,
    sigma2_b: f64,
    sigma2_w: f64,
    k: usize,
    lambda_star: f64,
) -> Result<IntensityPriorSummary> {
    if k < 1 || !(sigma2_b > 0.0) || !(sigma2_w > 0.0) || !(lambda_star > 0.0) {
        return Err(Error::Domain(
            "elicitation needs K ≥ 1 and positive variances and cap".into(),
        ));
    }
    let mu_y = mu_b;
    let sigma2_y = k as f64 * sigma2_w + sigma2_b;
    let mode = find_mode(mu_y, sigma2_y, lambda_star)?;
    let dens = |l: f64| intensity_prior_density(l, mu_y, sigma2_y, lambda_star);
    let moment = |power: i32| -> Result<f64> {
        let f = |l: f64| l.powi(power) * dens(l);
        let left = integrate(f, 0.0, mode, 1e-10, 0.0)?;
        let right = integrate(f, mode, lambda_star, 1e-10, 0.0)?;
        Ok(left + right)
    };
    let mass = moment(0)?;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Quadrature(format!("density integrates to {mass}")));
    }
    let mean = moment(1)? / mass;
    let second = moment(2)? / mass;
    Ok(IntensityPriorSummary {
        mean,
        variance: second - mean * mean,
        mode,
    })
}
