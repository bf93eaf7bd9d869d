//! Robust evaluation statistics: normalized scores, interquartile means,
//! stratified percentile-bootstrap confidence intervals, and performance
//! profiles.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// `100 (J - J_random) / (J_expert - J_random)`: random scores 0, expert
/// scores 100.
pub fn normalized_score(j: f64, j_random: f64, j_expert: f64) -> Result<f64> {
    let denom = j_expert - j_random;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::InvalidArgument(
            "normalisation needs distinct expert and random scores".into(),
        ));
    }
    Ok(100.0 * (j - j_random) / denom)
}

/// Interquartile mean with fractional-weight trimming: `n/4` observation
/// mass is discarded from each end of the sorted sample, splitting the
/// boundary observations fractionally, and the middle half is averaged.
/// For `n` divisible by 4 this coincides with dropping the extreme
/// quarters outright.
pub fn iqm(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("IQM of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let trim = n / 4.0;
    let mut total = 0.0;
    let mut weight = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        // observation i occupies mass [i, i + 1); clip it to [trim, n - trim]
        let lo = (i as f64).max(trim);
        let hi = ((i + 1) as f64).min(n - trim);
        let w = (hi - lo).max(0.0);
        total += w * x;
        weight += w;
    }
    Ok(total / weight)
}

/// Per-task trimmed pooling as the aggregate statistic: trim each task's
/// scores to its middle half (fractional weights), then take the weighted
/// mean of all surviving mass across tasks.
fn aggregate_iqm(per_task: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut weight = 0.0;
    for task in per_task {
        if task.is_empty() {
            return Err(Error::InvalidArgument("empty task in aggregate".into()));
        }
        let mut sorted = task.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as f64;
        let trim = n / 4.0;
        for (i, &x) in sorted.iter().enumerate() {
            let lo = (i as f64).max(trim);
            let hi = ((i + 1) as f64).min(n - trim);
            let w = (hi - lo).max(0.0);
            total += w * x;
            weight += w;
        }
    }
    Ok(total / weight)
}

/// Point estimate with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IqmCi {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub n_boot: usize,
}

/// Stratified percentile bootstrap of the aggregate IQM: each replicate
/// resamples every task's scores with replacement (preserving per-task
/// counts), recomputes the aggregate, and the CI takes the empirical
/// percentiles of the replicate statistics. Deterministic under `seed`
/// regardless of thread count (per-replicate derived seeds).
pub fn stratified_bootstrap_iqm_ci(
    data: &[Vec<f64>],
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<IqmCi> {
    if data.is_empty() || data.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument(
            "bootstrap needs non-empty scores for every task".into(),
        ));
    }
    if n_boot < 100 {
        return Err(Error::InvalidArgument(format!(
            "n_boot = {n_boot} is too small for percentile endpoints (min 100)"
        )));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    let point = aggregate_iqm(data)?;
    let mut replicates: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", b as u64));
            let resampled: Vec<Vec<f64>> = data
                .iter()
                .map(|task| {
                    (0..task.len())
                        .map(|_| task[rng.gen_range(0..task.len())])
                        .collect()
                })
                .collect();
            aggregate_iqm(&resampled).expect("resampled tasks stay non-empty")
        })
        .collect();
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    let lo = percentile(&replicates, alpha);
    let hi = percentile(&replicates, 1.0 - alpha);
    Ok(IqmCi {
        point,
        lo,
        hi,
        level,
        n_boot,
    })
}

/// Empirical percentile of a sorted sample (nearest-rank with linear
/// interpolation).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    }
}

/// Mean with a normal-assumption two-sided CI at the given level (z-score
/// from the standard-normal quantile), for per-task summary tables.
pub fn mean_normal_ci(samples: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let z = normal_quantile(0.5 + level / 2.0);
    let half = z * (var / n).sqrt();
    Ok((mean, mean - half, mean + half))
}

/// Acklam's rational approximation to the standard-normal quantile
/// (absolute error below 1.15e-9).
fn normal_quantile(p: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && p > 0.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// `(tau, fraction of scores strictly above tau)` per threshold.
pub fn performance_profile(scores: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    thresholds
        .iter()
        .map(|&tau| {
            let frac = if scores.is_empty() {
                0.0
            } else {
                scores.iter().filter(|&&s| s > tau).count() as f64 / scores.len() as f64
            };
            (tau, frac)
        })
        .collect()
}

/// CSV form of a profile curve: `threshold,fraction` with a header line.
pub fn profile_to_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("threshold,fraction\n");
    for (tau, frac) in curve {
        writeln!(out, "{tau},{frac}").unwrap();
    }
    out
}
