use svjump::model::elicit_intensity_prior;

use crate::support::Scale;
use crate::Outcome;

/// (μ_b, mean, variance, mode) with σ²_w = 0.5, σ²_b = 1, K = 2, λ* = 0.15.
const TABLE: [(f64, f64, f64, f64); 3] = [
    (-5.0, 0.003, 0.00004, 0.0001),
    (-2.4, 0.021, 0.00054, 0.002),
    (-10.0, 2e-5, 4e-8, 1e-6),
];

pub fn elicitation_table(_: &Scale) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for (mu_b, mean, var, mode) in TABLE {
        let s = match elicit_intensity_prior(mu_b, 1.0, 0.5, 2, 0.15) {
            Ok(s) => s,
            Err(e) => return Outcome::new(false, format!("μ_b = {mu_b}: {e}")),
        };
        for (name, got, want) in [("mean", s.mean, mean), ("variance", s.variance, var), ("mode", s.mode, mode)] {
            let rel = (got - want).abs() / want;
            worst = worst.max(rel);
            if rel > 0.1 {
                misses.push(format!("μ_b={mu_b} {name} {got:.3e} vs {want:.0e}"));
            }
        }
    }
    let detail = if misses.is_empty() {
        format!("all rows within 10%, worst {:.1}%", 100.0 * worst)
    } else {
        format!("outside 10%: {}", misses.join("; "))
    };
    Outcome::new(misses.is_empty(), detail)
}
