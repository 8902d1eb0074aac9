//! Generalized Pareto tail fit: profile-likelihood posterior mean over a
//! quasi-grid of `theta = -k / sigma`, followed by a weakly informative
//! shrinkage of `k` towards 0.5.

use super::{LooError, MIN_TAIL};
use crate::scalar::log_sum_exp;

const PRIOR: f64 = 3.0;
const MIN_GRID: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    /// Shape; positive values mean heavier tails.
    pub k: f64,
    pub sigma: f64,
}

/// Fits exceedances over a threshold (all positive).
pub fn gpd_fit(exceedances: &[f64]) -> Result<GpdFit, LooError> {
    let n = exceedances.len();
    if n < MIN_TAIL {
        return Err(LooError::TooFewTailSamples(n));
    }
    let mut x = exceedances.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let m = MIN_GRID + nf.sqrt().floor() as usize;
    let xstar = x[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let xmax = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / xmax + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / PRIOR / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let a = -t;
            let k = x.iter().map(|&xi| (a * xi).ln_1p()).sum::<f64>() / nf;
            nf * ((a / k).ln() - k - 1.0)
        })
        .collect();
    let norm = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta
        .iter()
        .zip(&l_theta)
        .map(|(t, l)| t * (l - norm).exp())
        .sum();
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    let k = k * nf / (nf + 10.0) + 5.0 / (nf + 10.0);
    Ok(GpdFit {
        k: if k.is_nan() { f64::INFINITY } else { k },
        sigma,
    })
}

/// Quantile function of the generalized Pareto distribution at location 0.
pub fn gpd_quantile(p: f64, sigma: f64, k: f64) -> f64 {
    if k == 0.0 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}
