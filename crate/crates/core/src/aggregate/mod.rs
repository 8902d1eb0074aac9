//! Cell partition, coverage shares and the per-draw map from record-level
//! probabilities to area proportions.
//!
//! For area `i`, cells sampled in `i` contribute their weighted mean of the
//! fitted probabilities; cells sampled only elsewhere borrow the pooled
//! weighted mean over the other areas; cells sampled nowhere are dropped and
//! the remaining shares renormalized.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{CellFrame, LinkedDataset};
use crate::diagnostics::{mean, quantile_sorted, variance};
use crate::direct::DirectEstimate;
use crate::model::{HierarchicalModel, ModelError};
use crate::sampler::DrawsMatrix;
use crate::scalar::Real;

pub const DEFAULT_RESIDUAL_WARNING: f64 = 0.05;
pub const MIN_SUMMARY_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("area {area}: cell set {set:?} is empty or has zero population")]
    EmptyCellSet { area: u32, set: CellSet },
    #[error("need at least {MIN_SUMMARY_DRAWS} draws, got {0}")]
    TooFewDraws(usize),
    #[error("{0} probabilities for {1} records")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellSet {
    /// Sampled in the area itself.
    Sampled,
    /// Unsampled in the area, sampled in at least one other.
    Borrowed,
    /// Sampled nowhere.
    Unsampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    areas: Vec<u32>,
    n_cells: usize,
    sets: Vec<CellSet>,
}

pub fn partition_cells(data: &LinkedDataset) -> CellPartition {
    let (m, g) = (data.m(), data.n_cells());
    let anywhere: Vec<bool> = (0..g).map(|c| (0..m).any(|a| data.n_ig(a, c) > 0)).collect();
    let mut sets = Vec::with_capacity(m * g);
    for a in 0..m {
        for c in 0..g {
            sets.push(if data.n_ig(a, c) > 0 {
                CellSet::Sampled
            } else if anywhere[c] {
                CellSet::Borrowed
            } else {
                CellSet::Unsampled
            });
        }
    }
    CellPartition {
        areas: data.cells().areas().to_vec(),
        n_cells: g,
        sets,
    }
}

impl CellPartition {
    pub fn m(&self) -> usize {
        self.areas.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn areas(&self) -> &[u32] {
        &self.areas
    }

    pub fn set(&self, area: usize, cell: usize) -> CellSet {
        self.sets[area * self.n_cells + cell]
    }

    pub fn cells(&self, area: usize, set: CellSet) -> Vec<usize> {
        (0..self.n_cells).filter(|&c| self.set(area, c) == set).collect()
    }
}

/// Population shares of the three cell sets in each area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageShares {
    pub area_id: Vec<u32>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn coverage_shares(cells: &CellFrame, partition: &CellPartition) -> CoverageShares {
    let mut out = CoverageShares {
        area_id: partition.areas().to_vec(),
        a1: vec![],
        a2: vec![],
        residual: vec![],
    };
    for a in 0..partition.m() {
        let mut n = [0u64; 3];
        for c in 0..partition.n_cells() {
            let k = match partition.set(a, c) {
                CellSet::Sampled => 0,
                CellSet::Borrowed => 1,
                CellSet::Unsampled => 2,
            };
            n[k] += cells.count(a, c);
        }
        let total = cells.total(a) as f64;
        out.a1.push(n[0] as f64 / total);
        out.a2.push(n[1] as f64 / total);
        out.residual.push(n[2] as f64 / total);
    }
    out
}

impl CoverageShares {
    pub fn summary(&self) -> SummaryStats {
        SummaryStats::of(&self.residual)
    }

    /// Areas whose residual share exceeds `threshold`.
    pub fn exceeding(&self, threshold: f64) -> Vec<u32> {
        self.area_id
            .iter()
            .zip(&self.residual)
            .filter(|(_, &r)| r > threshold)
            .map(|(&a, _)| a)
            .collect()
    }
}

/// Min, quartiles, median, mean and max (type-7 quartiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl SummaryStats {
    pub const LABELS: [&'static str; 6] = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."];

    pub fn of(xs: &[f64]) -> Self {
        assert!(!xs.is_empty(), "summary of an empty sample");
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        Self {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            mean: mean(&s),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }

    pub fn values(&self) -> [f64; 6] {
        [self.min, self.q1, self.median, self.mean, self.q3, self.max]
    }
}

/// Census share of each cell within one set of an area, `N_ig / sum N_ig`.
pub fn cell_share_weights(
    cells: &CellFrame,
    partition: &CellPartition,
    area: usize,
    which: CellSet,
) -> Result<Vec<(usize, f64)>, AggregateError> {
    let members = partition.cells(area, which);
    let total: u64 = members.iter().map(|&c| cells.count(area, c)).sum();
    if total == 0 {
        return Err(AggregateError::EmptyCellSet {
            area: partition.areas()[area],
            set: which,
        });
    }
    Ok(members
        .into_iter()
        .map(|c| (c, cells.count(area, c) as f64 / total as f64))
        .collect())
}

/// Weighted cell means of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans<T> {
    n_cells: usize,
    own: Vec<Option<T>>,
    pooled: Vec<Option<T>>,
}

impl<T: Real> CellMeans<T> {
    /// Weighted mean over the area's own records in the cell.
    pub fn own(&self, area: usize, cell: usize) -> Option<T> {
        self.own[area * self.n_cells + cell]
    }

    /// Weighted mean over all records in the cell (equal to the pool of the
    /// other areas whenever the area itself has none there).
    pub fn pooled(&self, cell: usize) -> Option<T> {
        self.pooled[cell]
    }
}

/// Area proportion of one draw, after and before renormalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaDraw<T> {
    pub normalized: T,
    pub raw: T,
}

/// Precomputed shares and weights, applied to any number of draws.
#[derive(Debug, Clone)]
pub struct Aggregator {
    partition: CellPartition,
    shares: CoverageShares,
    b1: Vec<Vec<(usize, f64)>>,
    b2: Vec<Vec<(usize, f64)>>,
    area_of: Vec<usize>,
    cell_of: Vec<usize>,
    weights: Vec<f64>,
}

impl Aggregator {
    pub fn new(data: &LinkedDataset) -> Self {
        let partition = partition_cells(data);
        let shares = coverage_shares(data.cells(), &partition);
        let weights_for = |set| {
            (0..partition.m())
                .map(|a| cell_share_weights(data.cells(), &partition, a, set).unwrap_or_default())
                .collect::<Vec<_>>()
        };
        let b1 = weights_for(CellSet::Sampled);
        let b2 = weights_for(CellSet::Borrowed);
        let over = shares.exceeding(DEFAULT_RESIDUAL_WARNING);
        if !over.is_empty() {
            log::warn!(
                "unsampled-cell share above {DEFAULT_RESIDUAL_WARNING} in areas {over:?}; \
                 renormalized estimates rest on the remaining cells"
            );
        }
        Self {
            partition,
            shares,
            b1,
            b2,
            area_of: (0..data.n()).map(|k| data.record_area(k)).collect(),
            cell_of: (0..data.n()).map(|k| data.record_cell(k)).collect(),
            weights: data.records().iter().map(|r| r.weight).collect(),
        }
    }

    pub fn partition(&self) -> &CellPartition {
        &self.partition
    }

    pub fn shares(&self) -> &CoverageShares {
        &self.shares
    }

    /// `b` weights of one area over the sampled (`Sampled`) or borrowed set.
    pub fn b_weights(&self, area: usize, set: CellSet) -> &[(usize, f64)] {
        match set {
            CellSet::Sampled => &self.b1[area],
            CellSet::Borrowed => &self.b2[area],
            CellSet::Unsampled => &[],
        }
    }

    pub fn cell_means<T: Real>(&self, theta: &[T]) -> Result<CellMeans<T>, AggregateError> {
        if theta.len() != self.weights.len() {
            return Err(AggregateError::LengthMismatch(theta.len(), self.weights.len()));
        }
        let (m, g) = (self.partition.m(), self.partition.n_cells());
        let mut s = vec![T::zero(); m * g];
        let mut w = vec![T::zero(); m * g];
        let mut ps = vec![T::zero(); g];
        let mut pw = vec![T::zero(); g];
        for (k, &t) in theta.iter().enumerate() {
            let (a, c) = (self.area_of[k], self.cell_of[k]);
            let wk = T::lit(self.weights[k]);
            s[a * g + c] = s[a * g + c] + wk * t;
            w[a * g + c] = w[a * g + c] + wk;
            ps[c] = ps[c] + wk * t;
            pw[c] = pw[c] + wk;
        }
        let ratio = |s: T, w: T| (w > T::zero()).then(|| s / w);
        Ok(CellMeans {
            n_cells: g,
            own: s.iter().zip(&w).map(|(&s, &w)| ratio(s, w)).collect(),
            pooled: ps.iter().zip(&pw).map(|(&s, &w)| ratio(s, w)).collect(),
        })
    }

    /// Area proportions of one draw from its record-level probabilities.
    pub fn area_draw<T: Real>(&self, theta: &[T]) -> Result<Vec<AreaDraw<T>>, AggregateError> {
        let means = self.cell_means(theta)?;
        Ok((0..self.partition.m())
            .map(|a| {
                let a1 = self.shares.a1[a];
                let a2 = self.shares.a2[a];
                let t1: T = self.b1[a]
                    .iter()
                    .map(|&(c, b)| T::lit(b) * means.own(a, c).expect("sampled cell has records"))
                    .sum();
                let t2: T = self.b2[a]
                    .iter()
                    .map(|&(c, b)| T::lit(b) * means.pooled(c).expect("borrowed cell has donors"))
                    .sum();
                let raw = T::lit(a1) * t1 + T::lit(a2) * t2;
                AreaDraw {
                    normalized: raw / T::lit(a1 + a2),
                    raw,
                }
            })
            .collect())
    }

    /// Maps every retained draw to area proportions (in draw order).
    pub fn posterior<T: Real>(
        &self,
        model: &HierarchicalModel<T>,
        draws: &DrawsMatrix<T>,
    ) -> Result<AreaPosterior<T>, AggregateError> {
        let per_draw: Vec<Vec<AreaDraw<T>>> = (0..draws.total())
            .into_par_iter()
            .map(|r| self.area_draw(&model.thetas(draws.flat_draw(r))?))
            .collect::<Result<_, _>>()?;
        Ok(AreaPosterior::from_draws(self.partition.areas().to_vec(), &per_draw))
    }
}

/// Per-area draws of the area proportion, stored area-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaPosterior<T> {
    pub area_id: Vec<u32>,
    pub normalized: Vec<Vec<T>>,
    pub raw: Vec<Vec<T>>,
}

impl<T: Real> AreaPosterior<T> {
    pub fn from_draws(area_id: Vec<u32>, per_draw: &[Vec<AreaDraw<T>>]) -> Self {
        let m = area_id.len();
        Self {
            normalized: (0..m).map(|a| per_draw.iter().map(|d| d[a].normalized).collect()).collect(),
            raw: (0..m).map(|a| per_draw.iter().map(|d| d[a].raw).collect()).collect(),
            area_id,
        }
    }
}

/// One row of the area estimate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaSummary {
    pub area_id: u32,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub raw_mean: f64,
    pub direct: Option<f64>,
    pub direct_se: Option<f64>,
    /// Direct standard error over posterior sd; defined only when both are
    /// positive.
    pub se_ratio: Option<f64>,
}

/// Posterior mean, sd and equal-tailed 95% interval per area, next to the
/// direct estimate of the same area.
pub fn posterior_area_summary<T: Real>(
    post: &AreaPosterior<T>,
    direct: &[DirectEstimate<f64>],
) -> Result<Vec<AreaSummary>, AggregateError> {
    let r = post.normalized.first().map_or(0, |d| d.len());
    if r < MIN_SUMMARY_DRAWS {
        return Err(AggregateError::TooFewDraws(r));
    }
    Ok(post
        .area_id
        .iter()
        .enumerate()
        .map(|(a, &id)| {
            let mut xs: Vec<f64> = post.normalized[a].iter().map(|x| x.as_f64()).collect();
            xs.sort_by(|a, b| a.total_cmp(b));
            let raw: Vec<f64> = post.raw[a].iter().map(|x| x.as_f64()).collect();
            let sd = variance(&xs).sqrt();
            let d = direct.iter().find(|d| d.area_id == id);
            let direct_se = d.and_then(|d| d.se);
            AreaSummary {
                area_id: id,
                n: d.map_or(0, |d| d.n),
                mean: mean(&xs),
                sd,
                lower: quantile_sorted(&xs, 0.025),
                upper: quantile_sorted(&xs, 0.975),
                raw_mean: mean(&raw),
                direct: d.and_then(|d| d.estimate),
                direct_se,
                se_ratio: direct_se.filter(|&s| s > 0.0 && sd > 0.0).map(|s| s / sd),
            }
        })
        .collect())
}
