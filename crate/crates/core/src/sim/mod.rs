//! Synthetic finite populations drawn from the model, informative Poisson
//! samples, and recovery summaries over replicated fits.
//!
//! Each unit carries a latent size `z`. Its inclusion propensity is
//! proportional to `exp(gamma z)` within the area, so the relative weight
//! `exp(-gamma z)` is known for every unit, sampled or not. The true linear
//! predictor uses the standardized relative weight, which makes the design
//! informative whenever `lambda != 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    coverage_shares, partition_cells, posterior_area_summary, AreaSummary, CoverageShares,
    SummaryStats,
};
use crate::data::{
    link, AreaCovariateTable, CellFrame, CellSchema, CovariateTransform, DataError,
    LinkedDataset, SurveyRecord,
};
use crate::diagnostics::mean;
use crate::direct::direct_table;
use crate::fit::{fit, FitError};
use crate::model::{inv_link, ModelConfig, PriorConfig, COMORBIDITY, PCT_REPUBLICAN};
use crate::sampler::{SamplerConfig, SamplerError};

pub const MIN_REPLICATES: usize = 30;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("the sample is empty")]
    EmptySample,
    #[error("need at least {MIN_REPLICATES} converged replicates, got {0}")]
    InsufficientReplicates(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Parameters of the generating model, on the scale of standardized area
/// covariates, centred age band `(age - 4) / 2` and standardized relative
/// weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    pub covariates: Vec<String>,
    /// One intercept per race-ethnicity group, race-major.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Age slope per gender.
    pub xi: Vec<f64>,
    pub lambda: f64,
    pub sigma_v: f64,
}

impl Default for Truth {
    fn default() -> Self {
        Self {
            covariates: vec![COMORBIDITY.into(), PCT_REPUBLICAN.into()],
            alpha: vec![0.4, 0.6, 0.1, 0.3, 0.5, 0.2, 0.0, 0.3],
            beta: vec![0.02, -0.02],
            xi: vec![0.1, -0.05],
            lambda: -0.1,
            sigma_v: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub m: usize,
    pub cell_count_min: u64,
    pub cell_count_max: u64,
    /// Expected sample size per area. Empty means a geometric spread with
    /// one unsampled area, scaled to `expected_total`.
    pub sample_sizes: Vec<f64>,
    pub expected_total: f64,
    /// Spread `gamma` of the log inclusion propensity.
    pub informativeness: f64,
    pub replicates: usize,
    pub seed: u64,
    pub truth: Truth,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m: 20,
            cell_count_min: 50,
            cell_count_max: 500,
            sample_sizes: vec![],
            expected_total: 1000.0,
            informativeness: 0.5,
            replicates: 100,
            seed: 20210501,
            truth: Truth::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        let c: Self = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let schema = CellSchema::default();
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.cell_count_min == 0 || self.cell_count_min > self.cell_count_max {
            return bad("need 0 < cell_count_min <= cell_count_max".into());
        }
        if !self.sample_sizes.is_empty() && self.sample_sizes.len() != self.m {
            return bad(format!("sample_sizes has {} entries for {} areas", self.sample_sizes.len(), self.m));
        }
        if self.sample_sizes.iter().any(|&n| !(n >= 0.0 && n.is_finite())) || !(self.expected_total > 0.0) {
            return bad("sample sizes must be finite and non-negative".into());
        }
        let t = &self.truth;
        if t.alpha.len() != schema.n_intercepts() || t.xi.len() != schema.n_genders() {
            return bad(format!(
                "truth needs {} alpha and {} xi values",
                schema.n_intercepts(),
                schema.n_genders()
            ));
        }
        if t.beta.len() != t.covariates.len() {
            return bad("truth.beta and truth.covariates differ in length".into());
        }
        if !(t.sigma_v >= 0.0) || !self.informativeness.is_finite() {
            return bad("sigma_v must be non-negative and informativeness finite".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        Ok(())
    }

    /// Expected sample size of every area.
    pub fn targets(&self) -> Vec<f64> {
        if !self.sample_sizes.is_empty() {
            return self.sample_sizes.clone();
        }
        if self.m == 1 {
            return vec![self.expected_total];
        }
        let k = self.m - 1;
        let raw: Vec<f64> = (0..k).map(|i| 70f64.powf(i as f64 / (k.max(2) - 1) as f64)).collect();
        let scale = self.expected_total / raw.iter().sum::<f64>();
        std::iter::once(0.0).chain(raw.into_iter().map(|r| r * scale)).collect()
    }

    /// Generator for replicate `rep`.
    pub fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    cell: u16,
    y: bool,
    propensity: f64,
}

/// A finite population: every unit's outcome and relative inclusion
/// propensity, grouped by area and cell.
#[derive(Debug, Clone)]
pub struct Population {
    cells: CellFrame,
    covariates: AreaCovariateTable,
    area_effects: Vec<f64>,
    units: Vec<Vec<Unit>>,
    truth: Vec<f64>,
}

impl Population {
    pub fn cells(&self) -> &CellFrame {
        &self.cells
    }

    pub fn covariates(&self) -> &AreaCovariateTable {
        &self.covariates
    }

    pub fn area_effects(&self) -> &[f64] {
        &self.area_effects
    }

    /// True area proportions, the mean outcome over all units.
    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn size(&self) -> usize {
        self.units.iter().map(Vec::len).sum()
    }

    /// Outcomes of one area, in generation order.
    pub fn outcomes(&self, area: usize) -> impl Iterator<Item = bool> + '_ {
        self.units[area].iter().map(|u| u.y)
    }
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    if xs.len() < 2 {
        return vec![0.0; xs.len()];
    }
    let m = mean(xs);
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    xs.iter()
        .map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 })
        .collect()
}

pub fn gen_population<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Population, SimError> {
    cfg.validate()?;
    let schema = CellSchema::default();
    let g = schema.n_cells();
    let t = &cfg.truth;
    let areas: Vec<u32> = (1..=cfg.m as u32).collect();

    let counts: Vec<Vec<u64>> = areas
        .iter()
        .map(|_| (0..g).map(|_| rng.random_range(cfg.cell_count_min..=cfg.cell_count_max)).collect())
        .collect();
    let raw_cov: Vec<Vec<f64>> = areas
        .iter()
        .map(|_| t.covariates.iter().map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let std_cov: Vec<Vec<f64>> = (0..t.covariates.len())
        .map(|j| standardize(&raw_cov.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let v_dist = Normal::new(0.0, t.sigma_v).map_err(|e| SimError::Config(e.to_string()))?;
    let area_effects: Vec<f64> = areas.iter().map(|_| v_dist.sample(rng)).collect();

    // relative weight exp(-gamma z) has known mean and sd for z ~ N(0, 1)
    let g2 = cfg.informativeness * cfg.informativeness;
    let w_mean = (g2 / 2.0).exp();
    let w_sd = ((2.0 * g2).exp() - g2.exp()).sqrt();

    let mut units = Vec::with_capacity(cfg.m);
    let mut truth = Vec::with_capacity(cfg.m);
    for (a, row) in counts.iter().enumerate() {
        let area_eta: f64 = area_effects[a]
            + t.beta.iter().zip(&std_cov).map(|(b, x)| b * x[a]).sum::<f64>();
        let mut area_units = Vec::with_capacity(row.iter().sum::<u64>() as usize);
        let mut ones = 0u64;
        for (c, &n) in row.iter().enumerate() {
            let key = schema.key(c);
            let cell_eta = area_eta
                + t.alpha[schema.intercept_index(key)]
                + t.xi[key.gender as usize] * (key.age_band as f64 - 4.0) / 2.0;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let h = if w_sd > 0.0 {
                    ((-cfg.informativeness * z).exp() - w_mean) / w_sd
                } else {
                    0.0
                };
                let theta = inv_link(cell_eta + t.lambda * h);
                let y = rng.random::<f64>() < theta;
                ones += y as u64;
                area_units.push(Unit {
                    cell: c as u16,
                    y,
                    propensity: (cfg.informativeness * z).exp(),
                });
            }
        }
        truth.push(ones as f64 / area_units.len() as f64);
        units.push(area_units);
    }

    let cells = CellFrame::from_dense(schema, areas.iter().copied().zip(counts).collect())?;
    let covariates = AreaCovariateTable::new(
        t.covariates.clone(),
        vec![CovariateTransform::Identity; t.covariates.len()],
        areas.iter().copied().zip(raw_cov).collect(),
    )?;
    Ok(Population {
        cells,
        covariates,
        area_effects,
        units,
        truth,
    })
}

/// Poisson sample with inclusion probability proportional to each unit's
/// propensity, scaled to the area's expected sample size.
pub fn draw_sample<R: Rng>(
    pop: &Population,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<LinkedDataset, SimError> {
    let targets = cfg.targets();
    let schema = pop.cells.schema();
    let mut records = vec![];
    for (a, units) in pop.units.iter().enumerate() {
        if targets[a] <= 0.0 {
            continue;
        }
        let total: f64 = units.iter().map(|u| u.propensity).sum();
        let scale = targets[a] / total;
        for u in units {
            let pi = (scale * u.propensity).min(1.0);
            if rng.random::<f64>() < pi {
                records.push(SurveyRecord {
                    area_id: pop.cells.areas()[a],
                    cell: schema.key(u.cell as usize),
                    y: u.y,
                    weight: 1.0 / pi,
                });
            }
        }
    }
    if records.is_empty() {
        return Err(SimError::EmptySample);
    }
    Ok(link(records, pop.cells.clone(), pop.covariates.clone())?)
}

/// Population and sample of replicate `rep`.
pub fn simulate_replicate(cfg: &SimConfig, rep: usize) -> Result<(Population, LinkedDataset), SimError> {
    let mut rng = cfg.rng(rep);
    let pop = gen_population(cfg, &mut rng)?;
    let sample = draw_sample(&pop, cfg, &mut rng)?;
    Ok((pop, sample))
}

/// Everything kept from one replicated fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub converged: bool,
    pub truth: Vec<f64>,
    pub areas: Vec<AreaSummary>,
    pub shares: CoverageShares,
}

pub fn fit_replicate(
    cfg: &SimConfig,
    rep: usize,
    model: &ModelConfig,
    prior: PriorConfig,
    sampler: &SamplerConfig,
) -> Result<(LinkedDataset, ReplicateResult), SimError> {
    let (pop, data) = simulate_replicate(cfg, rep)?;
    let sampler = SamplerConfig {
        seed: sampler.seed.wrapping_add(rep as u64),
        ..sampler.clone()
    };
    let shares = coverage_shares(data.cells(), &partition_cells(&data));
    let f = match fit::<f64>(&data, model, prior, &sampler) {
        Ok(f) => f,
        // too many divergences: the replicate counts as non-converged
        Err(FitError::Sampler(e @ SamplerError::DivergenceRateExceeded { .. })) => {
            log::warn!("replicate {rep}: {e}");
            let result = ReplicateResult {
                replicate: rep,
                converged: false,
                truth: pop.truth().to_vec(),
                areas: vec![],
                shares,
            };
            return Ok((data, result));
        }
        Err(e) => return Err(e.into()),
    };
    let post = f.area_posterior(&data)?;
    let direct = direct_table::<f64>(&data);
    let areas = posterior_area_summary(&post, &direct).map_err(FitError::from)?;
    let converged = f.nonconverged().is_empty();
    Ok((
        data,
        ReplicateResult {
            replicate: rep,
            converged,
            truth: pop.truth().to_vec(),
            areas,
            shares,
        },
    ))
}

/// Fits replicates `0..cfg.replicates` in parallel; results are in
/// replicate order.
pub fn run_study(
    cfg: &SimConfig,
    model: &ModelConfig,
    prior: PriorConfig,
    sampler: &SamplerConfig,
) -> Result<Vec<(LinkedDataset, ReplicateResult)>, SimError> {
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| fit_replicate(cfg, r, model, prior, sampler))
        .collect()
}

/// One area in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub replicate: usize,
    pub area_id: u32,
    pub n: usize,
    pub truth: f64,
    pub hb: f64,
    pub hb_sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub direct: Option<f64>,
    pub direct_se: Option<f64>,
    pub se_ratio: Option<f64>,
}

/// Direct-to-HB standard error ratios for one sample-size band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioBin {
    pub n_min: usize,
    pub n_max: Option<usize>,
    pub count: usize,
    pub median_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
}

pub const RATIO_BINS: [(usize, Option<usize>); 4] =
    [(1, Some(10)), (11, Some(30)), (31, Some(100)), (101, None)];

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    pub replicates_used: usize,
    pub replicates_dropped: usize,
    pub coverage: f64,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    pub rmse_hb: f64,
    pub rmse_direct: Option<f64>,
    pub ratio_bins: Vec<RatioBin>,
    /// Summary tables keyed by name: direct estimates, their standard errors,
    /// HB estimates and their posterior sds, residual shares.
    pub summaries: Vec<(String, SummaryStats)>,
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    Some(crate::diagnostics::quantile_sorted(xs, 0.5))
}

pub fn evaluate_recovery(results: &[ReplicateResult]) -> Result<RecoveryReport, SimError> {
    let used: Vec<&ReplicateResult> = results.iter().filter(|r| r.converged).collect();
    if used.len() < MIN_REPLICATES {
        return Err(SimError::InsufficientReplicates(used.len()));
    }
    let rows: Vec<RecoveryRow> = used
        .iter()
        .flat_map(|r| {
            r.areas.iter().zip(&r.truth).map(|(a, &truth)| RecoveryRow {
                replicate: r.replicate,
                area_id: a.area_id,
                n: a.n,
                truth,
                hb: a.mean,
                hb_sd: a.sd,
                lower: a.lower,
                upper: a.upper,
                covered: a.lower <= truth && truth <= a.upper,
                direct: a.direct,
                direct_se: a.direct_se,
                se_ratio: a.se_ratio,
            })
        })
        .collect();
    let nrows = rows.len() as f64;
    let coverage = rows.iter().filter(|r| r.covered).count() as f64 / nrows;
    let bias: Vec<f64> = rows.iter().map(|r| r.hb - r.truth).collect();
    let direct_err: Vec<f64> = rows.iter().filter_map(|r| r.direct.map(|d| d - r.truth)).collect();
    let rmse = |e: &[f64]| (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();

    let ratio_bins = RATIO_BINS
        .iter()
        .map(|&(lo, hi)| {
            let mut ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.n >= lo && hi.is_none_or(|h| r.n <= h))
                .filter_map(|r| r.se_ratio)
                .collect();
            RatioBin {
                n_min: lo,
                n_max: hi,
                count: ratios.len(),
                mean_ratio: (!ratios.is_empty()).then(|| mean(&ratios)),
                median_ratio: median(&mut ratios),
            }
        })
        .collect();

    let mut summaries = vec![];
    let mut push = |name: &str, xs: Vec<f64>| {
        if !xs.is_empty() {
            summaries.push((name.to_string(), SummaryStats::of(&xs)));
        }
    };
    push("direct", rows.iter().filter_map(|r| r.direct).collect());
    push("direct_se", rows.iter().filter_map(|r| r.direct_se).collect());
    push("hb", rows.iter().map(|r| r.hb).collect());
    push("hb_sd", rows.iter().map(|r| r.hb_sd).collect());
    push("residual_share", used.iter().flat_map(|r| r.shares.residual.clone()).collect());

    Ok(RecoveryReport {
        replicates_used: used.len(),
        replicates_dropped: results.len() - used.len(),
        coverage,
        mean_bias: mean(&bias),
        mean_abs_bias: bias.iter().map(|b| b.abs()).sum::<f64>() / nrows,
        rmse_hb: rmse(&bias),
        rmse_direct: (!direct_err.is_empty()).then(|| rmse(&direct_err)),
        ratio_bins,
        summaries,
        rows,
    })
}

#[cfg(test)]
mod tests;
