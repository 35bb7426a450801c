//! Effective sample size from the spectral density at zero of an
//! autoregressive fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// Set when the chain is constant and the estimate is just its length.
    pub degenerate: bool,
    pub ar_order: usize,
}

/// Sample autocovariances at lags 0..=max_lag (divisor n).
pub fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag.min(n - 1))
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Levinson–Durbin recursion: AR coefficients and innovation variance for
/// every order up to `acov.len() − 1`.
fn levinson(acov: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), acov[0])];
    let mut a: Vec<f64> = Vec::new();
    let mut v = acov[0];
    for k in 1..acov.len() {
        let mut num = acov[k];
        for (j, aj) in a.iter().enumerate() {
            num -= aj * acov[k - 1 - j];
        }
        let refl = num / v;
        let mut next = a.clone();
        for j in 0..a.len() {
            next[j] = a[j] - refl * a[a.len() - 1 - j];
        }
        next.push(refl);
        v *= 1.0 - refl * refl;
        if !(v > 0.0) {
            break;
        }
        a = next;
        out.push((a.clone(), v));
    }
    out
}

/// ESS = n·s²/S(0), with S(0) = σ²_p/(1 − Σa_j)² from the AIC-selected
/// Yule–Walker fit of order at most min(n − 1, 10·log10 n).
pub fn effective_sample_size(chain: &[f64]) -> Result<EssEstimate> {
    let n = chain.len();
    if n < 100 {
        return Err(Error::Domain(format!("ESS needs at least 100 draws, got {n}")));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ESS of a chain with non-finite values".into()));
    }
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let acov = autocovariances(chain, max_order);
    if !(acov[0] > 0.0) || acov[0] <= 1e-300 {
        return Ok(EssEstimate {
            ess: n as f64,
            degenerate: true,
            ar_order: 0,
        });
    }
    let fits = levinson(&acov);
    let nf = n as f64;
    let (best, _) = fits
        .iter()
        .enumerate()
        .map(|(k, (_, v))| (k, nf * v.ln() + 2.0 * k as f64))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("order 0 always present");
    let (coef, var_pred) = &fits[best];
    let s = 1.0 - coef.iter().sum::<f64>();
    let spec0 = var_pred / (s * s);
    let sample_var = acov[0] * nf / (nf - 1.0);
    Ok(EssEstimate {
        ess: nf * sample_var / spec0,
        degenerate: false,
        ar_order: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SvRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn iid_chain_has_full_ess() {
        let mut rng = SvRng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = effective_sample_size(&x).unwrap();
        assert!((0.9..=1.1).contains(&(e.ess / 1e4)), "{}", e.ess);
    }

    #[test]
    fn ar1_chain_matches_integrated_time() {
        let rho: f64 = 0.9;
        let n = 100_000;
        let mut rng = SvRng::seed_from_u64(2);
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = rho * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let e = effective_sample_size(&x).unwrap();
        let want = n as f64 * (1.0 - rho) / (1.0 + rho);
        assert!((e.ess / want - 1.0).abs() < 0.15, "{} vs {want}", e.ess);
    }

    #[test]
    fn antithetic_chain_exceeds_length() {
        let mut rng = SvRng::seed_from_u64(3);
        let n = 10_000;
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = -0.5 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let e = effective_sample_size(&x).unwrap();
        assert!(e.ess > n as f64);
    }

    #[test]
    fn constant_chain_is_flagged() {
        let e = effective_sample_size(&[2.5; 500]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.ess, 500.0);
        assert!(effective_sample_size(&[1.0; 50]).is_err());
    }
}
