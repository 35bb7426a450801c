use crate::error::{Error, Result};

/// Running sums of per-step log predictive densities.
pub fn cumulative(increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// log BF_j = log p_a(R_{T+1:T+j} | R_{1:T}) − log p_b(R_{T+1:T+j} | R_{1:T})
/// from per-step increments of each model.
pub fn bayes_factor_series(numer: &[f64], denom: &[f64]) -> Result<Vec<f64>> {
    if numer.len() != denom.len() {
        return Err(Error::LengthMismatch(format!(
            "numerator has {} steps, denominator {}",
            numer.len(),
            denom.len()
        )));
    }
    Ok(cumulative(numer)
        .into_iter()
        .zip(cumulative(denom))
        .map(|(a, b)| a - b)
        .collect())
}

/// Product over stocks of per-stock predictive densities: per-step sums of
/// `per_stock[i][j]`.
pub fn product_form(per_stock: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_stock.first() else {
        return Ok(Vec::new());
    };
    let steps = first.len();
    if per_stock.iter().any(|s| s.len() != steps) {
        return Err(Error::LengthMismatch("stocks have different numbers of steps".into()));
    }
    Ok((0..steps).map(|j| per_stock.iter().map(|s| s[j]).sum()).collect())
}
