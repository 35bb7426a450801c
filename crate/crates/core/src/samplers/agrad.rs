//! Auxiliary gradient-based Metropolis–Hastings for Gaussian AR(1) paths
//! under a non-Gaussian likelihood, shared by the volatility and factor
//! blocks.
//!
//! One call draws a single auxiliary vector z ~ N(x + (γ/2)∇g, (γ/2)I) and
//! then runs a path-only move followed by a joint path-and-hyperparameter
//! move, both conditional on that z.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tuning::AuxTuning;
use crate::error::Result;
use crate::kernels::{marginal_loglik_evidence, solve_and_sample, Ar1Precision};

/// Log-likelihood of a set of paths (component k, index 0..=T) and its
/// gradient with respect to every path entry.
pub trait PathLikelihood {
    fn log_lik(&self, paths: &[Vec<f64>]) -> f64;
    fn log_lik_grad(&self, paths: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>);
}

/// Maps unbounded hyperparameters to AR(1) priors of each component.
pub trait HyperModel {
    fn precisions(&self, theta: &[f64]) -> Result<Vec<Ar1Precision>>;
    /// log prior of the bounded parameters plus log |Jacobian| of the map
    /// from `theta`.
    fn log_prior_jacobian(&self, theta: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepControl {
    pub adapt: bool,
    pub update_hyper: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgradOutcome {
    pub path_accepted: bool,
    pub joint_accepted: bool,
}

fn u_term(z: &[Vec<f64>], x: &[Vec<f64>], grad: &[Vec<f64>], gamma: f64) -> f64 {
    let mut s = 0.0;
    for ((zk, xk), gk) in z.iter().zip(x).zip(grad) {
        for ((zi, xi), gi) in zk.iter().zip(xk).zip(gk) {
            s += (zi - xi - 0.25 * gamma * gi) * gi;
        }
    }
    s
}

fn finite(v: f64, grad: &[Vec<f64>]) -> bool {
    v.is_finite() && grad.iter().flatten().all(|g| g.is_finite())
}

fn propose<R: Rng + ?Sized>(
    precs: &[Ar1Precision],
    z: &[Vec<f64>],
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let ridge = 2.0 / gamma;
    precs
        .iter()
        .zip(z)
        .map(|(p, zk)| {
            let c: Vec<f64> = p
                .mean_term()
                .iter()
                .zip(zk)
                .map(|(m, zi)| m + ridge * zi)
                .collect();
            solve_and_sample(p, ridge, &c, rng).map(|(y, _)| y)
        })
        .collect()
}

fn log_evidence(precs: &[Ar1Precision], z: &[Vec<f64>], gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    for (p, zk) in precs.iter().zip(z) {
        let mean = vec![p.mean_level; p.length];
        total += marginal_loglik_evidence(zk, p, 0.5 * gamma, &mean)?;
    }
    Ok(total)
}

#[inline]
pub(crate) fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// One two-step auxiliary gradient update of `paths` and `theta`.
pub fn agrad_step<L, H, R>(
    paths: &mut [Vec<f64>],
    theta: &mut [f64],
    lik: &L,
    hyper: &H,
    tuning: &mut AuxTuning,
    ctl: StepControl,
    rng: &mut R,
) -> Result<AgradOutcome>
where
    L: PathLikelihood + ?Sized,
    H: HyperModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = AgradOutcome::default();
    let (mut g, mut grad) = lik.log_lik_grad(paths);
    if !finite(g, &grad) {
        tuning.non_finite += 1;
        tuning.gamma.record(false, ctl.adapt);
        if ctl.update_hyper {
            tuning.kappa.record(false, ctl.adapt);
        }
        return Ok(out);
    }
    let gamma = tuning.gamma();
    let half = 0.5 * gamma;
    let sd = half.sqrt();
    let z: Vec<Vec<f64>> = paths
        .iter()
        .zip(&grad)
        .map(|(xk, gk)| {
            xk.iter()
                .zip(gk)
                .map(|(x, gi)| x + half * gi + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    // path only, hyperparameters fixed
    let precs = hyper.precisions(theta)?;
    let y = propose(&precs, &z, gamma, rng)?;
    let (gy, grad_y) = lik.log_lik_grad(&y);
    if finite(gy, &grad_y) {
        let log_a = gy - g + u_term(&z, &y, &grad_y, gamma) - u_term(&z, paths, &grad, gamma);
        if mh_accept(log_a, rng) {
            paths.clone_from_slice(&y);
            g = gy;
            grad = grad_y;
            out.path_accepted = true;
        }
    } else {
        tuning.non_finite += 1;
    }
    tuning.gamma.record(out.path_accepted, ctl.adapt);

    if !ctl.update_hyper {
        return Ok(out);
    }
    let step = tuning.kappa().sqrt();
    let theta_new: Vec<f64> = theta
        .iter()
        .map(|t| t + step * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let precs_new = match hyper.precisions(&theta_new) {
        Ok(p) => p,
        Err(_) => {
            tuning.kappa.record(false, ctl.adapt);
            return Ok(out);
        }
    };
    let y = propose(&precs_new, &z, gamma, rng)?;
    let (gy, grad_y) = lik.log_lik_grad(&y);
    if finite(gy, &grad_y) {
        let log_b = gy - g + u_term(&z, &y, &grad_y, gamma) - u_term(&z, paths, &grad, gamma)
            + log_evidence(&precs_new, &z, gamma)?
            - log_evidence(&precs, &z, gamma)?
            + hyper.log_prior_jacobian(&theta_new)
            - hyper.log_prior_jacobian(theta);
        if mh_accept(log_b, rng) {
            paths.clone_from_slice(&y);
            theta.copy_from_slice(&theta_new);
            out.joint_accepted = true;
        }
    } else {
        tuning.non_finite += 1;
    }
    tuning.kappa.record(out.joint_accepted, ctl.adapt);
    Ok(out)
}

