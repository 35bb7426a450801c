//! Rousseeuw–Croux Q_n: the k-th order statistic of the pairwise absolute
//! differences, k = C(⌊n/2⌋+1, 2), scaled for consistency at the Gaussian.

const GAUSS_CONSISTENCY: f64 = 2.2219;

/// Finite-sample correction.
fn small_sample_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 0.399,
        3 => 0.994,
        4 => 0.512,
        5 => 0.844,
        6 => 0.611,
        7 => 0.857,
        8 => 0.669,
        9 => 0.872,
        n if n % 2 == 1 => n as f64 / (n as f64 + 1.4),
        n => n as f64 / (n as f64 + 3.8),
    }
}

fn target_rank(n: usize) -> usize {
    let h = n / 2 + 1;
    h * (h - 1) / 2
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// O(n²) reference implementation.
pub fn qn_scale_naive(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (x[i] - x[j]).abs())
        .collect();
    d.sort_by(f64::total_cmp);
    GAUSS_CONSISTENCY * small_sample_factor(n) * d[target_rank(n) - 1]
}

/// O(n log n) selection over the implicitly sorted matrix of differences
/// y_j − y_i (j > i) of the sorted sample, pivoting on the weighted median
/// of the row medians.
pub fn qn_scale(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut y = x.to_vec();
    y.sort_by(f64::total_cmp);
    let k = target_rank(n);
    // candidate columns of row i are left[i]..=right[i]; rows are empty when left > right
    let mut left: Vec<usize> = (0..n).map(|i| i + 1).collect();
    let mut right: Vec<usize> = vec![n - 1; n];
    let mut less = vec![0usize; n];
    let mut leq = vec![0usize; n];
    loop {
        let remaining: usize = (0..n)
            .filter(|&i| left[i] <= right[i])
            .map(|i| right[i] + 1 - left[i])
            .sum();
        if remaining <= n {
            break;
        }
        let mut meds: Vec<(f64, usize)> = (0..n)
            .filter(|&i| left[i] <= right[i])
            .map(|i| (y[(left[i] + right[i]) / 2] - y[i], right[i] + 1 - left[i]))
            .collect();
        meds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = remaining.div_ceil(2);
        let mut acc = 0;
        let mut pivot = meds[0].0;
        for (m, w) in &meds {
            acc += w;
            if acc >= half {
                pivot = *m;
                break;
            }
        }
        // less[i]: first column j > i with y_j − y_i ≥ pivot; leq[i]: first with > pivot
        let mut j = 1;
        for i in 0..n {
            j = j.max(i + 1);
            while j < n && y[j] - y[i] < pivot {
                j += 1;
            }
            less[i] = j;
        }
        let mut j = 1;
        for i in 0..n {
            j = j.max(i + 1);
            while j < n && y[j] - y[i] <= pivot {
                j += 1;
            }
            leq[i] = j;
        }
        let count_less: usize = (0..n).map(|i| less[i] - (i + 1)).sum();
        let count_leq: usize = (0..n).map(|i| leq[i] - (i + 1)).sum();
        if k <= count_less {
            for i in 0..n {
                right[i] = right[i].min(less[i].wrapping_sub(1));
                if less[i] == i + 1 {
                    right[i] = i;
                }
            }
        } else if k <= count_leq {
            return GAUSS_CONSISTENCY * small_sample_factor(n) * pivot;
        } else {
            for i in 0..n {
                left[i] = left[i].max(leq[i]);
            }
        }
    }
    let below: usize = (0..n).map(|i| left[i] - (i + 1)).sum();
    let mut cand: Vec<f64> = (0..n)
        .filter(|&i| left[i] <= right[i])
        .flat_map(|i| (left[i]..=right[i]).map(move |j| (i, j)))
        .map(|(i, j)| y[j] - y[i])
        .collect();
    cand.sort_by(f64::total_cmp);
    GAUSS_CONSISTENCY * small_sample_factor(n) * cand[k - below - 1]
}
