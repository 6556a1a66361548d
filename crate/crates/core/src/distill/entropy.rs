use crate::{Error, Result};

/// Bin of each action among `n_bins` uniform bins over `[-1, 1]`.
pub fn histogram_bins(actions: &[f64], n_bins: usize) -> Vec<usize> {
    let n = n_bins.max(1);
    actions
        .iter()
        .map(|a| {
            let t = (a.clamp(-1.0, 1.0) + 1.0) / 2.0 * n as f64;
            (t as usize).min(n - 1)
        })
        .collect()
}

/// Shannon entropy (nats) of a histogram.
pub fn entropy_of_bins(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.ln()
        })
        .sum()
}

/// Entropy of the action histogram over `bins` uniform bins on `[-1, 1]`.
pub fn entropy_estimate(actions: &[f64], bins: usize) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::Empty("action slice"));
    }
    let mut counts = vec![0usize; bins.max(1)];
    for b in histogram_bins(actions, bins) {
        counts[b] += 1;
    }
    Ok(entropy_of_bins(&counts))
}
