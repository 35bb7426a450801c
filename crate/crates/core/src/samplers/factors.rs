//! Latent intensity factors, their persistences and the per-stock loadings.

use rand::Rng;
use rand_distr::StandardNormal;

use super::agrad::{agrad_step, mh_accept, AgradOutcome, HyperModel, PathLikelihood, StepControl};
use super::tuning::{AdaptiveScale, AuxTuning};
use crate::error::Result;
use crate::kernels::{build_ar1_precision, Ar1Precision};
use crate::model::PriorSpec;
use crate::numeric::{from_unbounded, log_jacobian_unbounded, log_normal_pdf, log_sigmoid, sigmoid, to_unbounded};

/// Poisson likelihood of all jump counts given the factor paths.
#[derive(Debug, Clone, Copy)]
pub struct FactorLik<'a> {
    pub counts: &'a [&'a [u32]],
    pub deltas: &'a [&'a [f64]],
    pub b: &'a [f64],
    pub w: &'a [&'a [f64]],
    pub lambda_star: f64,
}

#[inline]
fn linear_predictor(b: f64, w: &[f64], f: &[Vec<f64>], t: usize) -> f64 {
    b + w.iter().zip(f).map(|(wk, fk)| wk * fk[t]).sum::<f64>()
}

/// Σ_t n_t log(λ_t Δ_t) − λ_t Δ_t for one stock, F index t+1 for count t.
pub fn stock_poisson_loglik(
    b: f64,
    w: &[f64],
    counts: &[u32],
    deltas: &[f64],
    f: &[Vec<f64>],
    lambda_star: f64,
) -> f64 {
    let ln_ls = lambda_star.ln();
    counts
        .iter()
        .zip(deltas)
        .enumerate()
        .map(|(t, (&n, &d))| {
            let ll = ln_ls + log_sigmoid(linear_predictor(b, w, f, t + 1));
            let rate = ll.exp() * d;
            if n == 0 {
                -rate
            } else {
                n as f64 * (ll + d.ln()) - rate
            }
        })
        .sum()
}

impl FactorLik<'_> {
    pub fn eval(&self, f: &[Vec<f64>]) -> f64 {
        (0..self.counts.len())
            .map(|i| stock_poisson_loglik(self.b[i], self.w[i], self.counts[i], self.deltas[i], f, self.lambda_star))
            .sum()
    }

    pub fn eval_grad(&self, f: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let mut grad: Vec<Vec<f64>> = f.iter().map(|fk| vec![0.0; fk.len()]).collect();
        let ln_ls = self.lambda_star.ln();
        let mut total = 0.0;
        for i in 0..self.counts.len() {
            let w = self.w[i];
            for (t, (&n, &d)) in self.counts[i].iter().zip(self.deltas[i]).enumerate() {
                let x = linear_predictor(self.b[i], w, f, t + 1);
                let ll = ln_ls + log_sigmoid(x);
                let rate = ll.exp() * d;
                let nf = n as f64;
                total += if n == 0 { -rate } else { nf * (ll + d.ln()) - rate };
                let s = sigmoid(-x) * (nf - rate);
                for (gk, wk) in grad.iter_mut().zip(w) {
                    gk[t + 1] += s * wk;
                }
            }
        }
        (total, grad)
    }
}

impl PathLikelihood for FactorLik<'_> {
    fn log_lik(&self, paths: &[Vec<f64>]) -> f64 {
        self.eval(paths)
    }

    fn log_lik_grad(&self, paths: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        self.eval_grad(paths)
    }
}

/// θ_k = log((1+α_k)/(1−α_k)), unit innovation variance, zero mean; the
/// uniform prior on (−1, 1) contributes its constant density.
struct FactorHyper {
    length: usize,
}

impl HyperModel for FactorHyper {
    fn precisions(&self, theta: &[f64]) -> Result<Vec<Ar1Precision>> {
        theta
            .iter()
            .map(|t| build_ar1_precision(from_unbounded(*t), 1.0, self.length))
            .collect()
    }

    fn log_prior_jacobian(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .map(|t| {
                let a = from_unbounded(*t);
                if a.abs() < 1.0 {
                    (0.5f64).ln() + log_jacobian_unbounded(a)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    }
}

/// Joint auxiliary-gradient update of the factor paths and A.
pub fn agrad_update_factors<R: Rng + ?Sized>(
    f: &mut [Vec<f64>],
    alphas: &mut [f64],
    lik: &FactorLik<'_>,
    tuning: &mut AuxTuning,
    ctl: StepControl,
    rng: &mut R,
) -> Result<AgradOutcome> {
    let hyper = FactorHyper { length: f[0].len() };
    let mut theta: Vec<f64> = alphas.iter().map(|a| to_unbounded(*a)).collect();
    let out = agrad_step(f, &mut theta, lik, &hyper, tuning, ctl, rng)?;
    if out.joint_accepted {
        for (a, t) in alphas.iter_mut().zip(&theta) {
            *a = from_unbounded(*t);
        }
    }
    Ok(out)
}

/// Γ_0 = √(1−α²) F_0 and Γ_t = F_t − α F_{t−1}, per factor.
pub fn innovations_from_factors(f: &[Vec<f64>], alphas: &[f64]) -> Vec<Vec<f64>> {
    f.iter()
        .zip(alphas)
        .map(|(fk, &a)| {
            let mut g = Vec::with_capacity(fk.len());
            g.push((1.0 - a * a).sqrt() * fk[0]);
            g.extend(fk.windows(2).map(|w| w[1] - a * w[0]));
            g
        })
        .collect()
}

pub fn factors_from_innovations(gamma: &[Vec<f64>], alphas: &[f64]) -> Vec<Vec<f64>> {
    gamma
        .iter()
        .zip(alphas)
        .map(|(gk, &a)| {
            let mut f = Vec::with_capacity(gk.len());
            f.push(gk[0] / (1.0 - a * a).sqrt());
            for g in &gk[1..] {
                let last = *f.last().expect("non-empty");
                f.push(a * last + g);
            }
            f
        })
        .collect()
}

/// Interweaving move for A: random walk on the transformed persistences with
/// the innovations held fixed, then F is rebuilt.
pub fn asis_factor_move<R: Rng + ?Sized>(
    f: &mut [Vec<f64>],
    alphas: &mut [f64],
    lik: &FactorLik<'_>,
    scale: &mut AdaptiveScale,
    adapt: bool,
    rng: &mut R,
) -> bool {
    let gamma = innovations_from_factors(f, alphas);
    let hyper = FactorHyper { length: f[0].len() };
    let theta: Vec<f64> = alphas.iter().map(|a| to_unbounded(*a)).collect();
    let step = scale.scale();
    let theta_new: Vec<f64> = theta
        .iter()
        .map(|t| t + step * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let alphas_new: Vec<f64> = theta_new.iter().map(|t| from_unbounded(*t)).collect();
    if alphas_new.iter().any(|a| !(a.abs() < 1.0)) {
        scale.record(false, adapt);
        return false;
    }
    let f_new = factors_from_innovations(&gamma, &alphas_new);
    let log_a = lik.eval(&f_new) - lik.eval(f) + hyper.log_prior_jacobian(&theta_new) - hyper.log_prior_jacobian(&theta);
    let ok = mh_accept(log_a, rng);
    if ok {
        f.clone_from_slice(&f_new);
        alphas.copy_from_slice(&alphas_new);
    }
    scale.record(ok, adapt);
    ok
}

/// Gaussian random-walk update of one stock's (b_i, W_i).
#[allow(clippy::too_many_arguments)]
pub fn update_loadings<R: Rng + ?Sized>(
    b: &mut f64,
    w: &mut [f64],
    counts: &[u32],
    deltas: &[f64],
    f: &[Vec<f64>],
    lambda_star: f64,
    prior: &PriorSpec,
    scale: &mut AdaptiveScale,
    adapt: bool,
    rng: &mut R,
) -> bool {
    let log_target = |b: f64, w: &[f64]| {
        stock_poisson_loglik(b, w, counts, deltas, f, lambda_star)
            + log_normal_pdf(b, prior.mu_b, prior.sigma2_b)
            + w.iter().map(|x| log_normal_pdf(*x, 0.0, prior.sigma2_w)).sum::<f64>()
    };
    let step = scale.scale();
    let b_new = *b + step * rng.sample::<f64, _>(StandardNormal);
    let w_new: Vec<f64> = w
        .iter()
        .map(|x| x + step * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_a = log_target(b_new, &w_new) - log_target(*b, w);
    let ok = mh_accept(log_a, rng);
    if ok {
        *b = b_new;
        w.copy_from_slice(&w_new);
    }
    scale.record(ok, adapt);
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SvRng;
    use rand::SeedableRng;

    type Fixture = (Vec<Vec<u32>>, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

    fn fixture(seed: u64) -> Fixture {
        let mut rng = SvRng::seed_from_u64(seed);
        let (p, t, k) = (4, 15, 2);
        let counts = (0..p).map(|_| (0..t).map(|_| rng.random_range(0..3u32)).collect()).collect();
        let deltas = (0..p).map(|_| (0..t).map(|s| if s % 5 == 0 { 3.0 } else { 1.0 }).collect()).collect();
        let b = (0..p).map(|_| -2.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let w = (0..p).map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let f = (0..k).map(|_| (0..=t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        (counts, deltas, b, w, f)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (counts, deltas, b, w, f) = fixture(seed);
            let counts: Vec<&[u32]> = counts.iter().map(|v| v.as_slice()).collect();
            let deltas: Vec<&[f64]> = deltas.iter().map(|v| v.as_slice()).collect();
            let w: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
            let lik = FactorLik {
                counts: &counts,
                deltas: &deltas,
                b: &b,
                w: &w,
                lambda_star: 0.15,
            };
            let (_, g) = lik.eval_grad(&f);
            for k in 0..f.len() {
                for t in 0..f[k].len() {
                    let eps = 1e-5;
                    let mut fp = f.clone();
                    fp[k][t] += eps;
                    let mut fm = f.clone();
                    fm[k][t] -= eps;
                    let fd = (lik.eval(&fp) - lik.eval(&fm)) / (2.0 * eps);
                    assert!((fd - g[k][t]).abs() <= 1e-6 * g[k][t].abs().max(1.0), "{fd} vs {}", g[k][t]);
                }
            }
        }
    }

    #[test]
    fn whitening_round_trip() {
        let (_, _, _, _, f) = fixture(3);
        let alphas = [0.85, -0.45];
        let g = innovations_from_factors(&f, &alphas);
        let back = factors_from_innovations(&g, &alphas);
        for (a, b) in f.iter().flatten().zip(back.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_observations_path_step_accepts() {
        let lik = FactorLik {
            counts: &[],
            deltas: &[],
            b: &[],
            w: &[],
            lambda_star: 0.15,
        };
        let mut f = vec![vec![0.0; 21]; 2];
        let mut alphas = vec![0.5, -0.2];
        let mut tuning = AuxTuning::new(0.5, 0.1);
        let mut rng = SvRng::seed_from_u64(5);
        for _ in 0..200 {
            let out = agrad_update_factors(
                &mut f,
                &mut alphas,
                &lik,
                &mut tuning,
                StepControl { adapt: false, update_hyper: true },
                &mut rng,
            )
            .unwrap();
            assert!(out.path_accepted);
        }
    }

    #[test]
    fn loadings_without_factors_follow_prior() {
        let prior = PriorSpec::default();
        let f = vec![vec![0.0; 31]];
        let counts = vec![0u32; 30];
        let deltas = vec![1.0; 30];
        let mut b = -5.0;
        let mut w = [0.0];
        let mut scale = AdaptiveScale::new(1.0, 0.25);
        let mut rng = SvRng::seed_from_u64(17);
        let (mut m1, mut m2, mut n) = (0.0, 0.0, 0.0);
        for it in 0..200_000 {
            update_loadings(&mut b, &mut w, &counts, &deltas, &f, 0.15, &prior, &mut scale, it < 5000, &mut rng);
            if it >= 5000 {
                m1 += w[0];
                m2 += w[0] * w[0];
                n += 1.0;
            }
        }
        let m = m1 / n;
        let v = m2 / n - m * m;
        // the chain is autocorrelated, so allow a generous band
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - prior.sigma2_w).abs() < 0.05, "var {v}");
    }
}
