//! Jump counts, jump sizes, their hyperparameters and independent
//! intensities.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, StandardNormal};

use crate::model::{cell_loglik_marginal, JumpSizePrior};
use crate::numeric::ln_gamma;

/// Unnormalized log p(n | r, h, μ_ξ, σ²_ξ, λΔ).
#[inline]
pub fn jump_count_log_weight(n: u32, r: f64, h: f64, mu_xi: f64, sigma2_xi: f64, rate: f64) -> f64 {
    let nf = n as f64;
    let pois = if n == 0 { 0.0 } else { nf * rate.ln() - ln_gamma(nf + 1.0) };
    cell_loglik_marginal(r, n, h, mu_xi, sigma2_xi) + pois - rate
}

/// Envelope of the count distribution: exact weights below `m`, a
/// log-linear tail from `m` on.
#[derive(Debug, Clone)]
pub struct CountEnvelope {
    pub head: Vec<f64>,
    pub m: u32,
    pub log_pm: f64,
    /// log p(m) − log p(m+1) > 0.
    pub decay: f64,
    /// log of the head mass and log of the tail mass.
    pub log_head: f64,
    pub log_tail: f64,
}

impl CountEnvelope {
    pub fn build(r: f64, h: f64, mu_xi: f64, sigma2_xi: f64, rate: f64) -> Self {
        let lp = |n: u32| jump_count_log_weight(n, r, h, mu_xi, sigma2_xi, rate);
        let mut head = vec![lp(0)];
        // the pmf is log-concave from n = 1, so the first descent after 1 is the mode
        let mut n = 1u32;
        let mut cur = lp(1);
        head.push(cur);
        loop {
            let next = lp(n + 1);
            if next < cur {
                break;
            }
            n += 1;
            cur = next;
            head.push(cur);
        }
        let mut m = n + 1;
        let mut log_pm = lp(m);
        let mut log_pm1 = lp(m + 1);
        while !(log_pm - log_pm1 > 1e-12) {
            head.push(log_pm);
            m += 1;
            log_pm = log_pm1;
            log_pm1 = lp(m + 1);
        }
        head.truncate(m as usize);
        let decay = (log_pm - log_pm1).max(1e-12);
        let log_head = crate::numeric::log_sum_exp(&head);
        // p(m) / (1 − e^{−decay})
        let log_tail = log_pm - (-(-decay).exp_m1()).ln();
        Self {
            head,
            m,
            log_pm,
            decay,
            log_head,
            log_tail,
        }
    }

    #[inline]
    pub fn log_envelope(&self, n: u32) -> f64 {
        if n < self.m {
            self.head[n as usize]
        } else {
            self.log_pm - self.decay * (n - self.m) as f64
        }
    }

    /// Probability that a proposal is accepted.
    pub fn acceptance_rate(&self, r: f64, h: f64, mu_xi: f64, sigma2_xi: f64, rate: f64) -> f64 {
        let mut tail = Vec::new();
        let mut n = self.m;
        loop {
            let v = jump_count_log_weight(n, r, h, mu_xi, sigma2_xi, rate);
            tail.push(v);
            if v < self.log_pm - 40.0 {
                break;
            }
            n += 1;
        }
        let exact = crate::numeric::log_sum_exp(&[self.log_head, crate::numeric::log_sum_exp(&tail)]);
        let env = crate::numeric::log_sum_exp(&[self.log_head, self.log_tail]);
        (exact - env).exp()
    }
}

/// Exact draw of the number of jumps in one cell by rejection from a
/// log-concave envelope.
pub fn sample_jump_count<R: Rng + ?Sized>(
    r: f64,
    h: f64,
    mu_xi: f64,
    sigma2_xi: f64,
    lambda: f64,
    delta_t: f64,
    rng: &mut R,
) -> u32 {
    let rate = lambda * delta_t;
    let env = CountEnvelope::build(r, h, mu_xi, sigma2_xi, rate);
    let total = crate::numeric::log_sum_exp(&[env.log_head, env.log_tail]);
    let p_head = (env.log_head - total).exp();
    let geo = Exp::new(env.decay).expect("positive decay");
    loop {
        let u: f64 = rng.random();
        if u <= p_head {
            // inversion on the exact head
            let shift = env.log_head;
            let v: f64 = rng.random();
            let mut acc = 0.0;
            for (n, w) in env.head.iter().enumerate() {
                acc += (w - shift).exp();
                if v <= acc {
                    return n as u32;
                }
            }
            return (env.head.len() - 1) as u32;
        }
        let k = geo.sample(rng).floor();
        if k > 1e9 {
            continue;
        }
        let n = env.m + k as u32;
        let log_p = jump_count_log_weight(n, r, h, mu_xi, sigma2_xi, rate);
        let log_q = env.log_envelope(n);
        debug_assert!(log_p <= log_q + 1e-9 * (1.0 + log_q.abs()), "envelope violated at n = {n}");
        let v: f64 = rng.random();
        if v.ln() <= log_p - log_q {
            return n;
        }
    }
}

/// Exact draw of the n jump sizes of one cell given their total effect on r.
pub fn sample_jump_sizes<R: Rng + ?Sized>(
    r: f64,
    n: u32,
    h: f64,
    mu_xi: f64,
    sigma2_xi: f64,
    rng: &mut R,
) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let eh = h.exp();
    let v = eh + nf * sigma2_xi;
    let mean = (mu_xi * eh + r * sigma2_xi) / v;
    let sd = sigma2_xi.sqrt();
    let mut e: Vec<f64> = (0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let c = (1.0 - (eh / v).sqrt()) / nf;
    let common = c * e.iter().sum::<f64>();
    for x in e.iter_mut() {
        *x += mean - common;
    }
    e
}

/// Totals over the jumps of one stock.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JumpSummary {
    pub count: f64,
    pub sum: f64,
}

impl JumpSummary {
    pub fn from_cells(xi: &[Vec<f64>]) -> Self {
        xi.iter().fold(Self::default(), |acc, cell| Self {
            count: acc.count + cell.len() as f64,
            sum: acc.sum + cell.iter().sum::<f64>(),
        })
    }
}

pub fn sample_mu_xi<R: Rng + ?Sized>(
    xi: &[Vec<f64>],
    sigma2_xi: f64,
    prior: &JumpSizePrior,
    rng: &mut R,
) -> f64 {
    let s = JumpSummary::from_cells(xi);
    let v0 = prior.mean_var;
    let denom = v0 * s.count + sigma2_xi;
    let mean = v0 * s.sum / denom;
    let var = v0 * sigma2_xi / denom;
    Normal::new(mean, var.sqrt()).expect("finite").sample(rng)
}

pub fn sample_sigma2_xi<R: Rng + ?Sized>(
    xi: &[Vec<f64>],
    mu_xi: f64,
    prior: &JumpSizePrior,
    rng: &mut R,
) -> f64 {
    let (count, ss) = xi
        .iter()
        .flatten()
        .fold((0.0, 0.0), |(c, s), x| (c + 1.0, s + (x - mu_xi) * (x - mu_xi)));
    let shape = prior.ig_shape + 0.5 * count;
    let scale = prior.ig_scale + 0.5 * ss;
    inverse_gamma(shape, scale, rng)
}

pub(crate) fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// λ ~ Gam(n + δ, rate c + Δ).
pub fn sample_independent_intensity<R: Rng + ?Sized>(
    n: u32,
    delta: f64,
    c: f64,
    delta_t: f64,
    rng: &mut R,
) -> f64 {
    let g: f64 = Gamma::new(n as f64 + delta, 1.0).expect("positive shape").sample(rng);
    (g / (c + delta_t)).max(f64::MIN_POSITIVE)
}
