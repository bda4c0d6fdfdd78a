use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Unbiased Pass@k estimator `1 - C(n-c, k) / C(n, k)`, evaluated as a
/// running product so large `n` cannot overflow.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if n == 0 || k == 0 {
        return Err(MetricsError::Domain(format!("n and k must be positive (n={n}, k={k})")));
    }
    if k > n || c > n {
        return Err(MetricsError::Domain(format!("need k <= n and c <= n (n={n}, c={c}, k={k})")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut all_fail = 1.0f64;
    for i in 0..k {
        all_fail *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - all_fail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("mean"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd, MetricsError> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Ok(MeanStd { mean: m, std: var.sqrt() })
}

/// Mean after dropping `floor(frac * n)` values from each end.
pub fn trimmed_mean(values: &[f64], frac: f64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("trimmed_mean"));
    }
    if !(0.0..0.5).contains(&frac) {
        return Err(MetricsError::Domain(format!("trim fraction {frac} outside [0, 0.5)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = (frac * sorted.len() as f64).floor() as usize;
    mean(&sorted[cut..sorted.len() - cut])
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest value.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("percentile"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::Domain(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let exact = p / 100.0 * sorted.len() as f64;
    // Absorb representation error such as 9.000000000000002.
    let rank = ((exact - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}
