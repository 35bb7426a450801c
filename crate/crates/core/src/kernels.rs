//! Banded Gaussian algebra for stationary AR(1) paths.
//!
//! Everything here runs in O(n) time and memory: precisions are kept as
//! (diagonal, off-diagonal) pairs and never densified.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::LN_2PI;

/// Precision of a stationary AR(1) path x_0..x_{n-1} with persistence `phi`,
/// innovation variance `sigma2` and level `mean_level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Precision {
    pub length: usize,
    pub phi: f64,
    pub sigma2: f64,
    pub mean_level: f64,
}

pub fn build_ar1_precision(phi: f64, sigma2: f64, length: usize) -> Result<Ar1Precision> {
    if !(phi.abs() < 1.0) {
        return Err(Error::Domain(format!("AR(1) persistence {phi} outside (-1, 1)")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("AR(1) innovation variance {sigma2} not positive")));
    }
    if length == 0 {
        return Err(Error::Domain("AR(1) path of length 0".into()));
    }
    Ok(Ar1Precision {
        length,
        phi,
        sigma2,
        mean_level: 0.0,
    })
}

impl Ar1Precision {
    pub fn with_mean(mut self, mean_level: f64) -> Self {
        self.mean_level = mean_level;
        self
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        let n = self.length;
        let p2 = self.phi * self.phi;
        let d = if n == 1 {
            1.0 - p2
        } else if i == 0 || i == n - 1 {
            1.0
        } else {
            1.0 + p2
        };
        d / self.sigma2
    }

    /// Common off-diagonal entry.
    #[inline]
    pub fn off(&self) -> f64 {
        -self.phi / self.sigma2
    }

    /// log|P| = log(1 − φ²) − n log σ².
    pub fn log_det(&self) -> f64 {
        (1.0 - self.phi * self.phi).ln() - self.length as f64 * self.sigma2.ln()
    }

    /// P·x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.length;
        debug_assert_eq!(x.len(), n);
        let o = self.off();
        (0..n)
            .map(|i| {
                let mut v = self.diag(i) * x[i];
                if i > 0 {
                    v += o * x[i - 1];
                }
                if i + 1 < n {
                    v += o * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// P·(mean_level·1), which is μ(1−φ)/σ²·(1, 1−φ, …, 1−φ, 1).
    pub fn mean_term(&self) -> Vec<f64> {
        let n = self.length;
        let (mu, phi, s2) = (self.mean_level, self.phi, self.sigma2);
        if n == 1 {
            return vec![mu * (1.0 - phi * phi) / s2];
        }
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 1.0 } else { 1.0 - phi };
                mu * (1.0 - phi) * w / s2
            })
            .collect()
    }

    /// (x − m1)'P(x − m1).
    pub fn quad_form_centered(&self, x: &[f64]) -> f64 {
        let n = self.length;
        let mu = self.mean_level;
        let s2 = self.sigma2;
        let first = x[0] - mu;
        let mut q = (1.0 - self.phi * self.phi) * first * first;
        for t in 1..n {
            let e = (x[t] - mu) - self.phi * (x[t - 1] - mu);
            q += e * e;
        }
        q / s2
    }

    /// log N(x | mean_level·1, P⁻¹).
    pub fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * (self.length as f64 * LN_2PI - self.log_det() + self.quad_form_centered(x))
    }

    /// Cholesky factor of P + ridge·I.
    pub fn factor_with_ridge(&self, ridge: f64) -> Result<TridiagChol> {
        let n = self.length;
        let diag: Vec<f64> = (0..n).map(|i| self.diag(i) + ridge).collect();
        let off = vec![self.off(); n.saturating_sub(1)];
        TridiagChol::factor(&diag, &off)
    }
}

/// Lower bidiagonal Cholesky factor L of a symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagChol {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl TridiagChol {
    /// Factorizes the matrix with main diagonal `d` and off-diagonal `e`.
    pub fn factor(d: &[f64], e: &[f64]) -> Result<Self> {
        let n = d.len();
        if e.len() + 1 != n && !(n == 0 && e.is_empty()) {
            return Err(Error::LengthMismatch(format!(
                "tridiagonal matrix with {n} diagonal and {} off-diagonal entries",
                e.len()
            )));
        }
        let mut diag = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut pivot = d[i];
            if i > 0 {
                let l = e[i - 1] / diag[i - 1];
                sub.push(l);
                pivot -= l * l;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
            }
            diag.push(pivot.sqrt());
        }
        Ok(Self { diag, sub })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn subdiagonal(&self) -> &[f64] {
        &self.sub
    }

    /// log|L L'|.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Overwrites b with L⁻¹b.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            if i > 0 {
                b[i] -= self.sub[i - 1] * b[i - 1];
            }
            b[i] /= self.diag[i];
        }
    }

    /// Overwrites b with L'⁻¹b.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        for i in (0..b.len()).rev() {
            if i + 1 < b.len() {
                b[i] -= self.sub[i] * b[i + 1];
            }
            b[i] /= self.diag[i];
        }
    }

    /// (L L')⁻¹ b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// Diagonal and off-diagonal of L L'.
    pub fn reconstruct(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let d = (0..n)
            .map(|i| {
                let s = if i > 0 { self.sub[i - 1] } else { 0.0 };
                self.diag[i] * self.diag[i] + s * s
            })
            .collect();
        let e = (1..n).map(|i| self.sub[i - 1] * self.diag[i - 1]).collect();
        (d, e)
    }
}

/// Draws from N(Q·c, Q) with Q = (P + ridge·I)⁻¹ and returns log|Q|.
pub fn solve_and_sample<R: Rng + ?Sized>(
    prec: &Ar1Precision,
    ridge: f64,
    linear_term: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if !(ridge >= 0.0) {
        return Err(Error::Domain(format!("negative ridge {ridge}")));
    }
    if linear_term.len() != prec.length {
        return Err(Error::LengthMismatch(format!(
            "linear term of length {} for path of length {}",
            linear_term.len(),
            prec.length
        )));
    }
    let chol = prec.factor_with_ridge(ridge)?;
    let mut mean = linear_term.to_vec();
    chol.forward_in_place(&mut mean);
    // L'x = L⁻¹c + z gives x = Q c + L'⁻¹z, both pieces sharing one back solve
    for v in mean.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    chol.backward_in_place(&mut mean);
    Ok((mean, -chol.log_det()))
}

/// log N(z | mean, P⁻¹ + noise_var·I), evaluated through the posterior of the
/// path given z so that only banded factorizations are needed.
pub fn marginal_loglik_evidence(
    z: &[f64],
    prior: &Ar1Precision,
    noise_var: f64,
    mean: &[f64],
) -> Result<f64> {
    if !(noise_var > 0.0) {
        return Err(Error::Domain(format!("noise variance {noise_var} not positive")));
    }
    let n = prior.length;
    if z.len() != n || mean.len() != n {
        return Err(Error::LengthMismatch(format!(
            "evidence with path length {n}, z of {} and mean of {}",
            z.len(),
            mean.len()
        )));
    }
    let tau_inv = 1.0 / noise_var;
    let chol = prior.factor_with_ridge(tau_inv)?;
    let centered: Vec<f64> = z.iter().zip(mean).map(|(a, b)| a - b).collect();
    // posterior mean of x − mean given z − mean
    let post = chol.solve(&centered.iter().map(|v| v * tau_inv).collect::<Vec<_>>());
    let prior_zero = Ar1Precision {
        mean_level: 0.0,
        ..*prior
    };
    let prior_quad = prior_zero.quad_form_centered(&post);
    let noise_quad: f64 = centered
        .iter()
        .zip(&post)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * tau_inv;
    let nf = n as f64;
    Ok(0.5 * prior.log_det() - 0.5 * prior_quad - 0.5 * nf * noise_var.ln() - 0.5 * noise_quad
        - 0.5 * chol.log_det()
        - 0.5 * nf * LN_2PI)
}
