use std::sync::OnceLock;

use svjump::mcmc::geweke::{run_geweke, GewekeConfig};
use svjump::mcmc::{effective_sample_size, ModelVariant, ParamName, SweepPlan};
use svjump::model::{elicit_intensity_prior, PriorSpec};

use crate::pipeline::{self, fit, Fit, Simulated};
use crate::support::{quantile, Scale};
use crate::Outcome;

pub fn getting_it_right(_: &Scale) -> Outcome {
    let toy = PriorSpec {
        mu_var: 1.0,
        sigma2_eta_gamma: (5.0, 50.0),
        jump_range: Some(4.0),
        ..PriorSpec::default()
    };
    let sweeps = 100_000;
    let runs = [
        (ModelVariant::Sv, 1, 30, toy, 404),
        (ModelVariant::SvjIndependent, 2, 30, toy, 505),
        (ModelVariant::SvjFactor, 2, 20, PriorSpec { mu_b: -2.4, ..toy }, 606),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, p, t, prior, seed) in runs {
        let mut cfg = GewekeConfig::new(variant, p, t, sweeps, seed);
        cfg.prior = prior;
        match run_geweke(&cfg) {
            Ok(report) => {
                let worst = report.worst().map_or(0.0, |s| s.z.abs());
                pass &= report.passes();
                parts.push(format!(
                    "{variant} {} stats max |z| {worst:.2} (critical {:.2})",
                    report.stats.len(),
                    report.critical
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{variant} failed: {e}"));
            }
        }
    }
    Outcome::new(pass, format!("{sweeps} sweeps each; {}", parts.join("; ")))
}

fn interval(chain: &[f64]) -> (f64, f64) {
    (quantile(chain, 0.025), quantile(chain, 0.975))
}

pub fn parameter_recovery(scale: &Scale) -> Outcome {
    let (iterations, burn_in) = if scale.full { (30_000, 10_000) } else { (12_000, 4_000) };
    let (p, t, replicates) = (4, 1500, 10);
    let truth = pipeline::independent_truth(p);
    let names = [ParamName::Mu, ParamName::Phi, ParamName::Sigma2Eta, ParamName::MuXi, ParamName::Sigma2Xi];
    let mut covered = [0usize; 5];
    let (mut big, mut found) = (0usize, 0usize);
    let (mut huge, mut huge_found) = (0usize, 0usize);
    for rep in 0..replicates {
        let data = Simulated::new(&truth, t, 0, 1000 + rep);
        let Fit { draws, .. } = fit(
            data.in_sample(),
            ModelVariant::SvjIndependent,
            PriorSpec::default(),
            iterations,
            burn_in,
            2000 + rep,
            |_| {},
        );
        for i in 0..p {
            for (k, name) in names.iter().enumerate() {
                let chain = draws.param_chain(i, *name).expect("sampled parameter");
                let (lo, hi) = interval(&chain);
                let want = name.get(&truth.stocks[i]).expect("set");
                covered[k] += usize::from(lo <= want && want <= hi);
            }
            for s in 0..t {
                let threshold = 2.0 * (0.5 * data.latent.h[i][s + 1]).exp();
                if data.latent.n[i][s] > 0 && data.latent.xi_sums[i][s].abs() > threshold {
                    big += 1;
                    found += usize::from(draws.jump_prob[i][s] > 0.5);
                    if data.latent.xi_sums[i][s].abs() > 2.0 * threshold {
                        huge += 1;
                        huge_found += usize::from(draws.jump_prob[i][s] > 0.5);
                    }
                }
            }
        }
    }
    let cells = p * replicates as usize;
    let need = (0.8 * cells as f64).ceil() as usize;
    let detected = found as f64 / big.max(1) as f64;
    let coverage: Vec<String> = names
        .iter()
        .zip(covered)
        .map(|(n, c)| format!("{} {c}/{cells}", n.label()))
        .collect();
    Outcome::new(
        covered.iter().all(|&c| c >= need) && detected >= 0.8,
        format!(
            "{replicates} replicates × {p} stocks, {iterations} sweeps; coverage {}; jumps detected {found}/{big} ({:.0}%), above four local SDs {huge_found}/{huge}",
            coverage.join(", "),
            100.0 * detected
        ),
    )
}

pub const ALPHAS: [f64; 2] = [0.85, -0.45];

pub struct FactorExperiment {
    pub data: Simulated,
    pub fit: Fit,
}

/// p = 20, T = 500 with ten held-out days; shared with the AIS check.
pub fn factor_smoke() -> &'static FactorExperiment {
    static CELL: OnceLock<FactorExperiment> = OnceLock::new();
    CELL.get_or_init(|| factor_experiment(20, 500, 10, 15_000, 5_000))
}

fn factor_experiment(p: usize, t: usize, holdout: usize, iterations: usize, burn_in: usize) -> FactorExperiment {
    let truth = pipeline::factor_truth(p, &ALPHAS, 61);
    let data = Simulated::new(&truth, t, holdout, 62);
    let retained = iterations - burn_in;
    let fit = fit(
        data.in_sample(),
        ModelVariant::SvjFactor,
        pipeline::factor_prior(),
        iterations,
        burn_in,
        63,
        |cfg| {
            cfg.n_factors = ALPHAS.len();
            cfg.path_stride = (retained / 100).max(1);
        },
    );
    FactorExperiment { data, fit }
}

pub fn factor_recovery(scale: &Scale) -> Outcome {
    let full;
    let exp = if scale.full {
        full = factor_experiment(100, 1500, 0, 40_000, 10_000);
        &full
    } else {
        factor_smoke()
    };
    let draws = &exp.fit.draws;
    let k = ALPHAS.len();
    // labels are exchangeable, so compare order statistics
    let mut sorted_truth = ALPHAS.to_vec();
    sorted_truth.sort_by(|a, b| b.total_cmp(a));
    let sorted: Vec<Vec<f64>> = draws
        .factor_params
        .iter()
        .map(|f| {
            let mut a = f.alphas.clone();
            a.sort_by(|x, y| y.total_cmp(x));
            a
        })
        .collect();
    let mut alpha_ok = true;
    let mut alpha_text = Vec::new();
    for j in 0..k {
        let chain: Vec<f64> = sorted.iter().map(|a| a[j]).collect();
        let (lo, hi) = interval(&chain);
        alpha_ok &= lo <= sorted_truth[j] && sorted_truth[j] <= hi;
        alpha_text.push(format!("α{} {:.2} in [{lo:.3}, {hi:.3}]", j + 1, sorted_truth[j]));
    }
    let prior = pipeline::factor_prior();
    let baseline = elicit_intensity_prior(prior.mu_b, prior.sigma2_b, prior.sigma2_w, k, prior.lambda_star)
        .expect("elicitation")
        .mean;
    let truth = &exp.data.latent.lambda;
    let t_in = exp.data.t_in;
    let (mut se_fit, mut se_base, mut cells) = (0.0, 0.0, 0usize);
    for (est, tr) in draws.lambda_mean.iter().zip(truth) {
        for (e, l) in est.iter().zip(&tr[..t_in]) {
            se_fit += (e - l).powi(2);
            se_base += (baseline - l).powi(2);
            cells += 1;
        }
    }
    let rmse_fit = (se_fit / cells as f64).sqrt();
    let rmse_base = (se_base / cells as f64).sqrt();
    let ratio = rmse_base / rmse_fit;
    let p = draws.stock_ids.len();
    Outcome::new(
        alpha_ok && ratio >= 5.0,
        format!(
            "p={p}, T={t_in}, {} draws; {}; λ RMSE {rmse_fit:.2e} vs prior-mean {rmse_base:.2e} (ratio {ratio:.2})",
            draws.n_draws(),
            alpha_text.join(", ")
        ),
    )
}

pub fn interweaving_benefit(_: &Scale) -> Outcome {
    let (t, replicates, iterations, burn_in) = (1500, 10, 6_000, 2_000);
    let truth = pipeline::sv_truth(1);
    let mut wins = 0;
    let mut ratios = Vec::new();
    for rep in 0..replicates {
        let data = Simulated::new(&truth, t, 0, 3000 + rep);
        let ess = |asis: bool| {
            let f = fit(data.in_sample(), ModelVariant::Sv, PriorSpec::default(), iterations, burn_in, 4000 + rep, |cfg| {
                cfg.plan = SweepPlan {
                    volatility_asis: asis,
                    ..SweepPlan::for_variant(ModelVariant::Sv)
                };
            });
            let chain: Vec<f64> = f
                .draws
                .param_chain(0, ParamName::Sigma2Eta)
                .expect("sampled")
                .iter()
                .map(|s| s.sqrt())
                .collect();
            effective_sample_size(&chain).map_or(0.0, |e| e.ess)
        };
        let (with, without) = (ess(true), ess(false));
        wins += usize::from(with > without);
        ratios.push(format!("{:.1}", with / without));
    }
    Outcome::new(
        wins >= 8,
        format!("ESS of σ_η higher with interweaving in {wins}/{replicates}; ratios {}", ratios.join(" ")),
    )
}
