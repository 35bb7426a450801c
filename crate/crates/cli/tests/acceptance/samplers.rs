use rand::Rng;
use rand_distr::StandardNormal;
use svjump::model::cell_loglik_marginal;
use svjump::numeric::{integrate, log_normal_pdf, log_sum_exp};
use svjump::samplers::{jump_count_log_weight, sample_jump_count, sample_jump_sizes, FactorLik, VolatilityLik};

use crate::support::{rng, Scale};
use crate::Outcome;

pub fn count_sampler_exactness(_: &Scale) -> Outcome {
    let (h, mu_xi, sigma2_xi) = (-0.85f64, -1.0, 12.25);
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let t0 = std::time::Instant::now();
    let mut g = rng(11);
    for rate in [0.005, 0.02, 0.15] {
        for k in [-5.0, -2.0, 0.5, 5.0] {
            let r = k * (0.5 * h).exp();
            let logw: Vec<f64> = (0..60).map(|n| jump_count_log_weight(n, r, h, mu_xi, sigma2_xi, rate)).collect();
            let z = log_sum_exp(&logw);
            let pmf: Vec<f64> = logw.iter().map(|l| (l - z).exp()).collect();
            let mut hist = vec![0usize; pmf.len()];
            let mut beyond = 0usize;
            for _ in 0..draws {
                match hist.get_mut(sample_jump_count(r, h, mu_xi, sigma2_xi, rate, 1.0, &mut g) as usize) {
                    Some(c) => *c += 1,
                    None => beyond += 1,
                }
            }
            let tv = 0.5
                * (pmf.iter().zip(&hist).map(|(p, &c)| (p - c as f64 / draws as f64).abs()).sum::<f64>()
                    + beyond as f64 / draws as f64);
            if tv > worst {
                worst = tv;
                worst_at = format!("λΔ={rate}, r={k}·e^(h/2)");
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        worst < 0.01 && secs < 30.0,
        format!("max TV {worst:.4} at {worst_at}, {secs:.1} s for 12 settings"),
    )
}

pub fn jump_size_oracle(_: &Scale) -> Outcome {
    let (h, mu_xi, sigma2_xi, r) = (-0.85f64, -3.0, 12.25, -5.0);
    let draws = 200_000;
    let mut g = rng(12);
    let mut worst_z: f64 = 0.0;
    for n in [1u32, 2, 5] {
        let nf = n as f64;
        let v = h.exp() + nf * sigma2_xi;
        let mean = mu_xi + sigma2_xi * (r - nf * mu_xi) / v;
        let cov = |j: usize, k: usize| f64::from(u8::from(j == k)) * sigma2_xi - sigma2_xi * sigma2_xi / v;
        let m = n as usize;
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![vec![0.0; m]; m];
        for _ in 0..draws {
            let x = sample_jump_sizes(r, n, h, mu_xi, sigma2_xi, &mut g);
            for ((a, row), xj) in s1.iter_mut().zip(s2.iter_mut()).zip(&x) {
                *a += xj - mean;
                for (b, xk) in row.iter_mut().zip(&x) {
                    *b += (xj - mean) * (xk - mean);
                }
            }
        }
        let nd = draws as f64;
        for j in 0..m {
            let se = (cov(j, j) / nd).sqrt();
            worst_z = worst_z.max((s1[j] / nd).abs() / se);
            for (k, sum) in s2[j].iter().enumerate() {
                let se = ((cov(j, j) * cov(k, k) + cov(j, k).powi(2)) / nd).sqrt();
                worst_z = worst_z.max((sum / nd - cov(j, k)).abs() / se);
            }
        }
    }
    let sd = sigma2_xi.sqrt();
    let (lo, hi) = (mu_xi - 12.0 * sd, mu_xi + 12.0 * sd);
    let inner = |x1: f64| {
        integrate(
            |x2| (log_normal_pdf(r, x1 + x2, h.exp()) + log_normal_pdf(x2, mu_xi, sigma2_xi)).exp(),
            lo,
            hi,
            1e-12,
            1e-300,
        )
        .unwrap_or(f64::NAN)
            * log_normal_pdf(x1, mu_xi, sigma2_xi).exp()
    };
    let quad = integrate(inner, lo, hi, 1e-11, 1e-300).map(f64::ln);
    let closed = cell_loglik_marginal(r, 2, h, mu_xi, sigma2_xi);
    match quad {
        Ok(q) => {
            let gap = (q - closed).abs();
            Outcome::new(
                worst_z < 3.0 && gap < 1e-6,
                format!("worst moment z {worst_z:.2}; n=2 marginal {closed:.10} vs quadrature {q:.10} (gap {gap:.1e})"),
            )
        }
        Err(e) => Outcome::new(false, format!("quadrature failed: {e}")),
    }
}

fn relative_gap(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

pub fn gradient_checks(_: &Scale) -> Outcome {
    let mut g = rng(13);
    let eps = 1e-5;
    let t = 60;
    let mut worst_vol: f64 = 0.0;
    for _ in 0..20 {
        let returns: Vec<f64> = (0..t).map(|_| 1.5 * g.sample::<f64, _>(StandardNormal)).collect();
        let counts: Vec<u32> = (0..t).map(|_| u32::from(g.random::<f64>() < 0.2) * g.random_range(1..3)).collect();
        let h: Vec<f64> = (0..=t).map(|_| -0.5 + g.sample::<f64, _>(StandardNormal)).collect();
        let lik = VolatilityLik {
            returns: &returns,
            counts: Some(&counts),
            mu_xi: g.random_range(-2.0..2.0),
            sigma2_xi: g.random_range(1.0..10.0),
        };
        let (_, grad) = lik.eval_grad(&h);
        for k in 0..h.len() {
            let mut up = h.clone();
            let mut down = h.clone();
            up[k] += eps;
            down[k] -= eps;
            let fd = (lik.eval(&up) - lik.eval(&down)) / (2.0 * eps);
            worst_vol = worst_vol.max(relative_gap(grad[k], fd));
        }
    }
    let (p, kf) = (3, 2);
    let mut worst_fac: f64 = 0.0;
    for _ in 0..20 {
        let counts: Vec<Vec<u32>> = (0..p)
            .map(|_| (0..t).map(|_| u32::from(g.random::<f64>() < 0.1) * g.random_range(1..3)).collect())
            .collect();
        let deltas: Vec<Vec<f64>> = (0..p).map(|_| (0..t).map(|s| if s % 5 == 4 { 3.0 } else { 1.0 }).collect()).collect();
        let b: Vec<f64> = (0..p).map(|_| g.random_range(-4.0..0.0)).collect();
        let w: Vec<Vec<f64>> = (0..p).map(|_| (0..kf).map(|_| g.sample::<f64, _>(StandardNormal)).collect()).collect();
        let f: Vec<Vec<f64>> = (0..kf).map(|_| (0..=t).map(|_| 1.5 * g.sample::<f64, _>(StandardNormal)).collect()).collect();
        let counts_ref: Vec<&[u32]> = counts.iter().map(Vec::as_slice).collect();
        let deltas_ref: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
        let w_ref: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
        let lik = FactorLik {
            counts: &counts_ref,
            deltas: &deltas_ref,
            b: &b,
            w: &w_ref,
            lambda_star: 0.15,
        };
        let (_, grad) = lik.eval_grad(&f);
        for k in 0..kf {
            for s in 0..=t {
                let mut up = f.clone();
                let mut down = f.clone();
                up[k][s] += eps;
                down[k][s] -= eps;
                let fd = (lik.eval(&up) - lik.eval(&down)) / (2.0 * eps);
                worst_fac = worst_fac.max(relative_gap(grad[k][s], fd));
            }
        }
    }
    Outcome::new(
        worst_vol < 1e-6 && worst_fac < 1e-6,
        format!("max relative gap: volatility {worst_vol:.1e}, factors {worst_fac:.1e}"),
    )
}
