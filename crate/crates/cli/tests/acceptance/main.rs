//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `SVJ_ACCEPTANCE_FULL=1` runs factor recovery at full scale and parameter
//! recovery with longer chains. `SVJ_ACCEPTANCE_STRICT=1` makes any failed
//! criterion fail the process. Arguments select criteria by number, e.g.
//! `cargo test --test acceptance -- 4 8`.

mod chains;
mod forecasting;
mod pipeline;
mod prior;
mod reproducibility;
mod samplers;
mod support;

use std::process::ExitCode;
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, fn(&support::Scale) -> Outcome);

const CRITERIA: [Criterion; 12] = [
    (1, "rejection sampler exactness", samplers::count_sampler_exactness),
    (2, "jump-size conditional oracle", samplers::jump_size_oracle),
    (3, "gradient checks", samplers::gradient_checks),
    (4, "getting it right", chains::getting_it_right),
    (5, "parameter recovery", chains::parameter_recovery),
    (6, "factor recovery", chains::factor_recovery),
    (7, "interweaving raises ESS", chains::interweaving_benefit),
    (8, "particle filter unbiasedness", forecasting::pf_unbiasedness),
    (9, "Bayes factor shape", forecasting::bayes_factor_shape),
    (10, "AIS per-stock weight variance", forecasting::ais_weight_variance),
    (11, "prior elicitation table", prior::elicitation_table),
    (12, "worker-count reproducibility", reproducibility::byte_identical_outputs),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let scale = support::Scale::from_env();
    println!("acceptance ({})", if scale.full { "full scale" } else { "smoke scale" });
    let mut failed = Vec::new();
    for (n, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let out = run(&scale);
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {verdict} {name}: {} [{:.1} s]",
            out.detail,
            t0.elapsed().as_secs_f64()
        );
        if !out.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    println!("failed criteria: {failed:?}");
    if std::env::var("SVJ_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
