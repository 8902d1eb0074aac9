//! Convergence diagnostics: split-R-hat, effective sample size (Geyer
//! initial-monotone sequence over split chains), Monte Carlo standard errors
//! and posterior summaries. Quantiles use type-7 linear interpolation.

use thiserror::Error;

use crate::sampler::DrawsMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticError {
    #[error("need at least one chain with at least 4 draws and chains of equal length")]
    TooFewDraws,
    #[error("all draws have zero within-chain variance")]
    ZeroVariance,
}

/// Type-7 quantile of an already sorted slice.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Type-7 quantiles of unsorted data.
pub fn quantiles<T: Real>(xs: &[T], ps: &[f64]) -> Vec<T> {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    ps.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

/// Arithmetic mean with one refinement pass, so constant input is returned
/// exactly.
pub fn mean<T: Real>(xs: &[T]) -> T {
    let n = T::from_usize_lossy(xs.len());
    let m = xs.iter().copied().sum::<T>() / n;
    m + xs.iter().map(|&x| x - m).sum::<T>() / n
}

/// Sample variance with `n - 1` denominator.
pub fn variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len() - 1)
}

/// Splits every chain into halves (dropping the middle draw of odd chains).
fn split<T: Real>(chains: &[Vec<T>]) -> Result<Vec<&[T]>, DiagnosticError> {
    let n = chains.first().map_or(0, |c| c.len());
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticError::TooFewDraws);
    }
    let half = n / 2;
    Ok(chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect())
}

/// Potential scale reduction on split half-chains:
/// `sqrt(((n-1)/n W + B/n) / W)`.
pub fn split_rhat<T: Real>(chains: &[Vec<T>]) -> Result<T, DiagnosticError> {
    let seqs = split(chains)?;
    let n = T::from_usize_lossy(seqs[0].len());
    let means: Vec<T> = seqs.iter().map(|s| mean(s)).collect();
    let w = mean(&seqs.iter().map(|s| variance(s)).collect::<Vec<_>>());
    if !(w > T::zero()) {
        return Err(DiagnosticError::ZeroVariance);
    }
    let b = n * variance(&means);
    let var_plus = (n - T::one()) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Biased (divide-by-n) autocovariance of `x` at `lag`.
fn autocov<T: Real>(x: &[T], m: T, lag: usize) -> T {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(&a, &b)| (a - m) * (b - m))
        .sum::<T>()
        / T::from_usize_lossy(n)
}

/// Effective sample size of the pooled draws, capped at the number of draws.
pub fn ess<T: Real>(chains: &[Vec<T>]) -> Result<T, DiagnosticError> {
    let seqs = split(chains)?;
    let n = seqs[0].len();
    let nt = T::from_usize_lossy(n);
    let m_seq = seqs.len();
    let means: Vec<T> = seqs.iter().map(|s| mean(s)).collect();
    let acov_mean = |lag: usize| -> T {
        seqs.iter()
            .zip(&means)
            .map(|(s, &m)| autocov(s, m, lag))
            .sum::<T>()
            / T::from_usize_lossy(m_seq)
    };
    let acov0 = acov_mean(0);
    let mean_var = acov0 * nt / (nt - T::one());
    if !(mean_var > T::zero()) {
        return Err(DiagnosticError::ZeroVariance);
    }
    let mut var_plus = mean_var * (nt - T::one()) / nt;
    if m_seq > 1 {
        var_plus = var_plus + variance(&means);
    }
    let rho = |lag: usize| T::one() - (mean_var - acov_mean(lag)) / var_plus;

    let mut rho_s = vec![T::zero(); n + 2];
    let mut rho_even = T::one();
    rho_s[0] = rho_even;
    let mut rho_odd = rho(1);
    rho_s[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > T::zero() {
        rho_even = rho(s + 1);
        rho_odd = rho(s + 2);
        if rho_even + rho_odd >= T::zero() {
            rho_s[s + 1] = rho_even;
            rho_s[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > T::zero() {
        rho_s[max_s + 1] = rho_even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho_s[t + 1] + rho_s[t + 2] > rho_s[t - 1] + rho_s[t] {
            rho_s[t + 1] = (rho_s[t - 1] + rho_s[t]) * T::lit(0.5);
            rho_s[t + 2] = rho_s[t + 1];
        }
        t += 2;
    }
    let total = T::from_usize_lossy(m_seq * n);
    let tau = -T::one() + T::lit(2.0) * rho_s[..max_s].iter().copied().sum::<T>() + rho_s[max_s + 1];
    let tau = tau.max(T::one() / total.log10());
    Ok((total / tau).min(total))
}

/// Monte Carlo standard error of the posterior mean, `sd / sqrt(ESS)`.
pub fn mcse_mean<T: Real>(chains: &[Vec<T>]) -> Result<T, DiagnosticError> {
    let all: Vec<T> = chains.iter().flatten().copied().collect();
    Ok(variance(&all).sqrt() / ess(chains)?.sqrt())
}

/// Monte Carlo standard error of the posterior sd (delta method on the
/// second central moment).
pub fn mcse_sd<T: Real>(chains: &[Vec<T>]) -> Result<T, DiagnosticError> {
    let all: Vec<T> = chains.iter().flatten().copied().collect();
    let m = mean(&all);
    let sq: Vec<Vec<T>> = chains
        .iter()
        .map(|c| c.iter().map(|&x| (x - m) * (x - m)).collect())
        .collect();
    let sq_all: Vec<T> = sq.iter().flatten().copied().collect();
    let sd = variance(&all).sqrt();
    let var_m2 = variance(&sq_all) / ess(&sq)?;
    Ok(var_m2.sqrt() / (T::lit(2.0) * sd))
}

pub const DEFAULT_QUANTILES: [f64; 4] = [0.10, 0.15, 0.85, 0.90];

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary<T> {
    pub name: String,
    pub mean: T,
    /// `None` when the ESS is undefined (constant draws).
    pub se_mean: Option<T>,
    pub sd: T,
    pub quantiles: Vec<T>,
    pub n_eff: Option<T>,
    /// `None` for a single chain or zero within-chain variance.
    pub rhat: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable<T> {
    pub probs: Vec<f64>,
    pub rows: Vec<ParamSummary<T>>,
}

impl<T: Real> DiagnosticsTable<T> {
    /// Column headers: `mean, se_mean, sd, <quantiles>, n_eff, Rhat`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["param".to_string(), "mean".into(), "se_mean".into(), "sd".into()];
        h.extend(self.probs.iter().map(|p| format!("{}%", p * 100.0)));
        h.push("n_eff".into());
        h.push("Rhat".into());
        h
    }

    /// Largest R-hat over parameters; undefined values are ignored.
    pub fn max_rhat(&self) -> Option<T> {
        self.rows.iter().filter_map(|r| r.rhat).fold(None, |acc, r| {
            Some(acc.map_or(r, |a: T| a.max(r)))
        })
    }

    /// Names of parameters whose R-hat is at or above `threshold`.
    pub fn nonconverged(&self, threshold: f64) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.rhat.is_some_and(|x| x.as_f64() >= threshold))
            .map(|r| r.name.as_str())
            .collect()
    }
}

pub fn summarize_chains<T: Real>(name: &str, chains: &[Vec<T>], probs: &[f64]) -> ParamSummary<T> {
    let all: Vec<T> = chains.iter().flatten().copied().collect();
    let sd = if all.len() > 1 { variance(&all).sqrt() } else { T::zero() };
    let n_eff = ess(chains).ok();
    ParamSummary {
        name: name.to_string(),
        mean: mean(&all),
        se_mean: n_eff.map(|e| sd / e.sqrt()),
        sd,
        quantiles: quantiles(&all, probs),
        n_eff,
        rhat: if chains.len() >= 2 {
            split_rhat(chains).ok()
        } else {
            None
        },
    }
}

/// One summary row per parameter.
pub fn summarize<T: Real>(draws: &DrawsMatrix<T>, probs: &[f64]) -> DiagnosticsTable<T> {
    let rows = (0..draws.dim())
        .map(|p| summarize_chains(&draws.names()[p], &draws.param_chains(p), probs))
        .collect();
    DiagnosticsTable {
        probs: probs.to_vec(),
        rows,
    }
}
