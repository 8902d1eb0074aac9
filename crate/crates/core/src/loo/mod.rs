//! Pareto-smoothed importance-sampling leave-one-out cross-validation.
//!
//! Importance ratios for observation `k` are `1 / p(y_k | draw)`. The largest
//! `M = ceil(min(0.2 R, 3 sqrt(R)))` ratios are replaced by expected order
//! statistics of a generalized Pareto fit, truncated at the largest raw ratio
//! and normalized. A shape estimate above 0.7 marks the observation as
//! unreliable.

mod gpd;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::variance;
use crate::model::{HierarchicalModel, ModelError};
use crate::sampler::DrawsMatrix;
use crate::scalar::{log_sum_exp, Real};

pub use gpd::{gpd_fit, gpd_quantile, GpdFit};

pub const K_THRESHOLD: f64 = 0.7;
pub const MIN_TAIL: usize = 5;
pub const MIN_DRAWS: usize = 100;
const MAGIC: &[u8; 6] = b"SAELL1";

#[derive(Debug, Error)]
pub enum LooError {
    #[error("generalized Pareto fit needs at least {MIN_TAIL} exceedances, got {0}")]
    TooFewTailSamples(usize),
    #[error("non-finite log-likelihood at draw {draw}, observation {obs}")]
    NonFiniteEntry { draw: usize, obs: usize },
    #[error("PSIS needs at least {MIN_DRAWS} draws, got {0}")]
    TooFewDraws(usize),
    #[error("models were fitted to different observations ({0} vs {1})")]
    MismatchedObservations(usize, usize),
    #[error("not a log-likelihood file")]
    BadMagic,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pointwise log-likelihood, one row per retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    draws: usize,
    obs: usize,
    values: Vec<f64>,
}

impl LogLikMatrix {
    pub fn new(draws: usize, obs: usize, values: Vec<f64>) -> Result<Self, LooError> {
        assert_eq!(values.len(), draws * obs, "matrix shape");
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LooError::NonFiniteEntry {
                draw: i / obs.max(1),
                obs: i % obs.max(1),
            });
        }
        Ok(Self { draws, obs, values })
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn obs(&self) -> usize {
        self.obs
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.obs..(r + 1) * self.obs]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.draws).map(|r| self.values[r * self.obs + k]).collect()
    }

    /// Little-endian binary: magic, `u64` draws, `u64` observations, then
    /// row-major `f64` values.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.draws as u64).to_le_bytes())?;
        w.write_all(&(self.obs as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LooError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LooError::BadMagic);
        }
        let mut u = [0u8; 8];
        r.read_exact(&mut u)?;
        let draws = u64::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let obs = u64::from_le_bytes(u) as usize;
        let mut bytes = vec![0u8; draws * obs * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(draws, obs, values)
    }
}

/// Bernoulli log-density of every record at every retained draw.
pub fn pointwise_loglik<T: Real>(
    model: &HierarchicalModel<T>,
    draws: &DrawsMatrix<T>,
) -> Result<LogLikMatrix, LooError> {
    let rows: Vec<Vec<T>> = (0..draws.total())
        .into_par_iter()
        .map(|r| model.pointwise_log_likelihood(draws.flat_draw(r)))
        .collect::<Result<_, _>>()?;
    let n = model.design().n();
    let values = rows.into_iter().flatten().map(|v| v.as_f64()).collect();
    LogLikMatrix::new(draws.total(), n, values)
}

/// Smoothed log-weights of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PsisResult {
    /// Normalized: `exp` sums to one.
    pub log_weights: Vec<f64>,
    /// `None` when the tail is degenerate (all tail ratios equal);
    /// `Some(inf)` when the tail fit failed.
    pub pareto_k: Option<f64>,
}

impl PsisResult {
    pub fn flagged(&self) -> bool {
        self.pareto_k.is_some_and(|k| !(k <= K_THRESHOLD))
    }
}

pub fn tail_length(draws: usize) -> usize {
    let r = draws as f64;
    (0.2 * r).min(3.0 * r.sqrt()).ceil() as usize
}

pub fn psis_smooth(log_ratios: &[f64]) -> Result<PsisResult, LooError> {
    let s = log_ratios.len();
    if s < MIN_DRAWS {
        return Err(LooError::TooFewDraws(s));
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|x| x - max).collect();
    let m = tail_length(s);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]).then(a.cmp(&b)));
    let tail = &order[s - m..];
    let lo = lw[tail[0]];
    let hi = lw[tail[m - 1]];
    let pareto_k = if (hi - lo).abs() < f64::EPSILON / 100.0 {
        None
    } else {
        let cutoff = lw[order[s - m - 1]];
        let exp_cutoff = cutoff.exp();
        let exceed: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
        match gpd_fit(&exceed) {
            Ok(fit) if fit.k.is_finite() => {
                for (j, &i) in tail.iter().enumerate() {
                    let p = (j as f64 + 0.5) / m as f64;
                    lw[i] = (gpd_quantile(p, fit.sigma, fit.k) + exp_cutoff).ln();
                }
                Some(fit.k)
            }
            _ => {
                log::warn!("generalized Pareto fit failed; using plain importance weights");
                Some(f64::INFINITY)
            }
        }
    };
    for w in &mut lw {
        *w = w.min(0.0);
    }
    let norm = log_sum_exp(&lw);
    for w in &mut lw {
        *w -= norm;
    }
    Ok(PsisResult {
        log_weights: lw,
        pareto_k,
    })
}

/// Leave-one-out expected log pointwise predictive density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElpdReport {
    pub elpd_loo: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
    /// Full-data log pointwise predictive density.
    pub lpd: f64,
    pub p_loo: f64,
    pub pareto_k: Vec<Option<f64>>,
}

impl ElpdReport {
    pub fn n(&self) -> usize {
        self.pointwise.len()
    }

    /// Indices of observations with unreliable weights.
    pub fn flagged(&self) -> Vec<usize> {
        self.pareto_k
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_some_and(|k| !(k <= K_THRESHOLD)))
            .map(|(i, _)| i)
            .collect()
    }
}

fn se_of_sum(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (xs.len() as f64 * variance(xs)).sqrt()
}

pub fn elpd_loo(ll: &LogLikMatrix) -> Result<ElpdReport, LooError> {
    let cols: Vec<(f64, f64, Option<f64>)> = (0..ll.obs())
        .into_par_iter()
        .map(|k| {
            let col = ll.column(k);
            let neg: Vec<f64> = col.iter().map(|v| -v).collect();
            let psis = psis_smooth(&neg)?;
            let terms: Vec<f64> = psis.log_weights.iter().zip(&col).map(|(w, l)| w + l).collect();
            let lpd = log_sum_exp(&col) - (col.len() as f64).ln();
            Ok((log_sum_exp(&terms), lpd, psis.pareto_k))
        })
        .collect::<Result<_, LooError>>()?;
    let pointwise: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let elpd = pointwise.iter().sum::<f64>();
    let lpd = cols.iter().map(|c| c.1).sum::<f64>();
    let flagged = cols.iter().filter(|c| c.2.is_some_and(|k| !(k <= K_THRESHOLD))).count();
    if flagged > 0 {
        log::warn!("{flagged} observations have Pareto k above {K_THRESHOLD}");
    }
    Ok(ElpdReport {
        elpd_loo: elpd,
        se: se_of_sum(&pointwise),
        lpd,
        p_loo: lpd - elpd,
        pareto_k: cols.iter().map(|c| c.2).collect(),
        pointwise,
    })
}

/// `elpd(a) - elpd(b)` and the standard error of the paired differences.
pub fn compare_pair(a: &ElpdReport, b: &ElpdReport) -> Result<(f64, f64), LooError> {
    if a.n() != b.n() {
        return Err(LooError::MismatchedObservations(a.n(), b.n()));
    }
    let d: Vec<f64> = a.pointwise.iter().zip(&b.pointwise).map(|(x, y)| x - y).collect();
    Ok((d.iter().sum(), se_of_sum(&d)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub model: String,
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub elpd_loo: f64,
    pub se_elpd_loo: f64,
}

/// Orders models best first; each difference is taken against the best.
pub fn compare(models: &[(String, ElpdReport)]) -> Result<Vec<CompareRow>, LooError> {
    let Some((_, first)) = models.first() else {
        return Ok(vec![]);
    };
    for (_, r) in models {
        if r.n() != first.n() {
            return Err(LooError::MismatchedObservations(first.n(), r.n()));
        }
    }
    let mut idx: Vec<usize> = (0..models.len()).collect();
    idx.sort_by(|&a, &b| models[b].1.elpd_loo.total_cmp(&models[a].1.elpd_loo).then(a.cmp(&b)));
    let best = &models[idx[0]].1;
    idx.into_iter()
        .map(|i| {
            let (name, r) = &models[i];
            let (diff, se) = compare_pair(r, best)?;
            Ok(CompareRow {
                model: name.clone(),
                elpd_diff: diff,
                se_diff: se,
                elpd_loo: r.elpd_loo,
                se_elpd_loo: r.se,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
