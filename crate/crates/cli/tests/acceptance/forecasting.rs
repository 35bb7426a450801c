use rand::Rng;
use rand_distr::StandardNormal;
use svjump::forecast::{particle_filter, CountPrior, PfConfig};
use svjump::mcmc::ModelVariant;
use svjump::model::{nb_marginal_logpmf, PriorSpec, StockParams};
use svjump::numeric::{integrate, ln_gamma, log_normal_pdf};

use crate::chains::factor_smoke;
use crate::pipeline::{self, ais_forecast, fit, pf_forecast, Simulated};
use crate::support::{mean, rng, spearman, variance, Scale};
use crate::Outcome;

pub fn pf_unbiasedness(_: &Scale) -> Outcome {
    // σ_η = 0: h_t = μ + φ^t (h_0 − μ), so the likelihood is one integral over h_0
    let p = StockParams {
        mu: -0.5,
        phi: 0.97,
        sigma2_eta: 0.0,
        mu_xi: 0.0,
        sigma2_xi: 1.0,
        b: None,
    };
    let (m0, v0) = (-0.3, 0.4);
    let mut g = rng(81);
    let mut returns: Vec<f64> = (0..25).map(|_| 0.7 * g.sample::<f64, _>(StandardNormal)).collect();
    // a heavy-tailed stretch collapses the weights
    returns[10..14].copy_from_slice(&[6.5, -0.02, 5.0, 0.01]);
    let loglik = |h0: f64| {
        let mut h = h0;
        let mut s = log_normal_pdf(h0, m0, v0);
        for &r in &returns {
            h = p.mu + p.phi * (h - p.mu);
            s += log_normal_pdf(r, 0.0, h.exp());
        }
        s
    };
    let (lo, hi) = (m0 - 14.0 * v0.sqrt(), m0 + 14.0 * v0.sqrt());
    let peak = (0..2001)
        .map(|k| loglik(lo + (hi - lo) * k as f64 / 2000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let exact = match integrate(|h0| (loglik(h0) - peak).exp(), lo, hi, 1e-12, 1e-300) {
        Ok(v) => v.ln() + peak,
        Err(e) => return Outcome::new(false, format!("quadrature failed: {e}")),
    };
    let runs = 200;
    let particles = 500;
    let cfg = PfConfig {
        particles,
        ..PfConfig::default()
    };
    let deltas = vec![1.0; returns.len()];
    let mut ratios = Vec::with_capacity(runs);
    let mut logs = Vec::with_capacity(runs);
    let mut resampled = 0usize;
    for _ in 0..runs {
        let init: Vec<f64> = (0..particles).map(|_| m0 + v0.sqrt() * g.sample::<f64, _>(StandardNormal)).collect();
        let out = match particle_filter(&p, CountPrior::NoJumps, &init, &returns, &deltas, &cfg, &mut g) {
            Ok(o) => o,
            Err(e) => return Outcome::new(false, format!("filter failed: {e}")),
        };
        resampled += out.steps.iter().filter(|s| s.resampled).count();
        logs.push(out.log_marginal());
        ratios.push((out.log_marginal() - exact).exp());
    }
    let se = (variance(&ratios) / runs as f64).sqrt();
    let gap = (mean(&ratios) - 1.0).abs();
    Outcome::new(
        gap < 3.0 * se && resampled > 0,
        format!(
            "likelihood ratio to exact {:.4} ± {se:.4} (SE) over {runs} runs; mean log estimate {:.4} vs exact {exact:.4}; {resampled} resampling steps",
            mean(&ratios),
            mean(&logs)
        ),
    )
}

fn cumulative(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn per_step_sum(per_stock: &[Vec<f64>]) -> Vec<f64> {
    (0..per_stock[0].len()).map(|j| per_stock.iter().map(|s| s[j]).sum()).collect()
}

pub fn bayes_factor_shape(scale: &Scale) -> Outcome {
    let ell = 30;
    let trajectories = if scale.full { 1000 } else { 200 };
    // jumps against no jumps on data with independent jumps
    let data = Simulated::new(&pipeline::independent_truth(4), 1500, ell, 91);
    let prior = PriorSpec::default();
    let svj = fit(data.in_sample(), ModelVariant::SvjIndependent, prior, 6_000, 2_000, 92, |_| {});
    let sv = fit(data.in_sample(), ModelVariant::Sv, prior, 6_000, 2_000, 93, |_| {});
    let bf = cumulative(
        &per_step_sum(&pf_forecast(&svj, &data, 2000, 94))
            .iter()
            .zip(per_step_sum(&pf_forecast(&sv, &data, 2000, 95)))
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let steps: Vec<f64> = (1..=ell).map(|j| j as f64).collect();
    let rho = spearman(&steps, &bf);
    let first = bf[ell - 1] > 0.0 && rho > 0.9;

    // factor intensities against independent ones on factor data, product form
    let seeds = 10;
    let mut wins = 0;
    let mut finals = Vec::new();
    let mut oracle_wins = 0;
    for seed in 0..seeds {
        let truth = pipeline::factor_truth(10, &crate::chains::ALPHAS, 500 + seed);
        let data = Simulated::new(&truth, 400, ell, 600 + seed);
        let factor = fit(data.in_sample(), ModelVariant::SvjFactor, pipeline::factor_prior(), 5_000, 2_000, 700 + seed, |cfg| {
            cfg.n_factors = 2;
            cfg.path_stride = 30;
        });
        let indep = fit(data.in_sample(), ModelVariant::SvjIndependent, pipeline::factor_prior(), 4_000, 1_500, 800 + seed, |_| {});
        let ais = ais_forecast(&factor, &data, trajectories, 5, 900 + seed);
        let numer: f64 = ais.stock_log_increments().iter().flatten().sum();
        let denom: f64 = pf_forecast(&indep, &data, 2000, 950 + seed).iter().flatten().sum();
        let log_bf = numer - denom;
        wins += usize::from(log_bf > 0.0);
        finals.push(format!("{log_bf:.2}"));
        oracle_wins += usize::from(count_oracle_log_bf(&data) > 0.0);
    }
    Outcome::new(
        first && wins >= 8,
        format!(
            "independent data: log BF at ℓ {:.2}, min {:.2}, Spearman {rho:.3}; factor data ({trajectories} AIS trajectories): positive at ℓ in {wins}/{seeds} ({}); with known intensities and counts {oracle_wins}/{seeds}",
            bf[ell - 1],
            bf.iter().copied().fold(f64::INFINITY, f64::min),
            finals.join(" ")
        ),
    )
}

/// Log BF of the held-out counts alone under the true intensities against
/// the Gamma-Poisson marginal: the most a forecast of λ could gain.
fn count_oracle_log_bf(data: &Simulated) -> f64 {
    let prior = PriorSpec::default();
    let mut total = 0.0;
    for (i, (n, lambda)) in data.latent.n.iter().zip(&data.latent.lambda).enumerate() {
        for t in data.t_in..data.full.n_times() {
            let d = data.full.deltas(i)[t];
            let rate = lambda[t] * d;
            let k = n[t] as f64;
            let pois = k * rate.ln() - rate - ln_gamma(k + 1.0);
            total += pois - nb_marginal_logpmf(n[t], prior.delta, prior.c, d).unwrap_or(f64::NAN);
        }
    }
    total
}

pub fn ais_weight_variance(_: &Scale) -> Outcome {
    let exp = factor_smoke();
    let out = ais_forecast(&exp.fit, &exp.data, 200, 5, 101);
    let global = variance(&out.log_global_weights);
    let p = out.log_stock_weights[0].len();
    let stock: Vec<f64> = (0..p)
        .map(|i| variance(&out.log_stock_weights.iter().map(|w| w[i]).collect::<Vec<_>>()))
        .collect();
    let below = stock.iter().filter(|v| **v < global).count();
    let max = stock.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        below == stock.len(),
        format!(
            "var(log Ω) {global:.3}; var(log ω_i) below it for {below}/{} stocks (largest {max:.3})",
            stock.len()
        ),
    )
}
