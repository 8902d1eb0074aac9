use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ParamLayout, WeightTransform};
use crate::data::LinkedDataset;
use crate::scalar::Real;

/// Center and scale applied to one continuous covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub name: String,
    pub center: f64,
    pub scale: f64,
}

/// Per-record inputs to the linear predictor. Area covariates live in
/// [`Design::area_covariates`] and are looked up through `area`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRow<T> {
    pub intercept: usize,
    pub area: usize,
    pub gender: usize,
    pub age: T,
    pub hw: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    rows: Vec<DesignRow<T>>,
    y: Vec<bool>,
    area_x: Vec<T>,
    n_beta: usize,
    m: usize,
    n_intercepts: usize,
    n_genders: usize,
    config: ModelConfig,
    covariate_names: Vec<String>,
    report: Vec<Standardization>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn standardize(name: &str, xs: &mut [f64], enabled: bool) -> Result<Standardization, ModelError> {
    if !enabled || xs.is_empty() {
        return Ok(Standardization {
            name: name.to_string(),
            center: 0.0,
            scale: 1.0,
        });
    }
    let (center, scale) = mean_sd(xs);
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if hi - lo <= 1e-12 * center.abs().max(1.0) || !scale.is_finite() {
        return Err(ModelError::DegenerateCovariate(name.to_string()));
    }
    for x in xs.iter_mut() {
        *x = (*x - center) / scale;
    }
    Ok(Standardization {
        name: name.to_string(),
        center,
        scale,
    })
}

/// Builds one design row per record. With `standardize`, area covariates,
/// age and `h(w)` are centered and scaled by their mean and sd over records.
pub fn build_design<T: Real>(
    data: &LinkedDataset,
    config: &ModelConfig,
) -> Result<Design<T>, ModelError> {
    let schema = data.schema();
    let cov = data.covariates();
    let n = data.n();
    let m = data.m();
    let areas = data.cells().areas();

    let cols = config
        .area_covariates
        .iter()
        .map(|name| {
            cov.column(name)
                .ok_or_else(|| ModelError::UnknownCovariate(name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = Vec::new();

    // Area covariates: standardized over records, stored per area.
    let mut area_x = vec![0.0f64; m * cols.len()];
    for (j, (&col, name)) in cols.iter().zip(&config.area_covariates).enumerate() {
        let mut per_record: Vec<f64> = data
            .records()
            .iter()
            .map(|r| cov.transformed(r.area_id, col).expect("linked"))
            .collect();
        let s = standardize(name, &mut per_record, config.standardize)?;
        for (a, &id) in areas.iter().enumerate() {
            area_x[a * cols.len() + j] = match cov.transformed(id, col) {
                Some(v) => (v - s.center) / s.scale,
                None => f64::NAN,
            };
        }
        report.push(s);
    }

    let mut age: Vec<f64> = data.records().iter().map(|r| r.age_band() as f64).collect();
    report.push(standardize("age", &mut age, config.standardize)?);

    let hw: Option<Vec<f64>> = if config.weight_transform.is_active() {
        let mut h = data
            .records()
            .iter()
            .map(|r| {
                config
                    .weight_transform
                    .apply(r.weight)
                    .map(|v| v.expect("active transform"))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        report.push(standardize("h(w)", &mut h, config.standardize)?);
        Some(h)
    } else {
        None
    };

    let rows = (0..n)
        .map(|k| {
            let r = &data.records()[k];
            DesignRow {
                intercept: schema.intercept_index(r.cell),
                area: data.record_area(k),
                gender: r.cell.gender as usize,
                age: T::lit(age[k]),
                hw: hw.as_ref().map(|h| T::lit(h[k])),
            }
        })
        .collect();

    Ok(Design {
        rows,
        y: data.records().iter().map(|r| r.y).collect(),
        area_x: area_x.into_iter().map(T::lit).collect(),
        n_beta: cols.len(),
        m,
        n_intercepts: schema.n_intercepts(),
        n_genders: schema.n_genders(),
        config: config.clone(),
        covariate_names: config.area_covariates.clone(),
        report,
    })
}

impl<T: Real> Design<T> {
    pub fn rows(&self) -> &[DesignRow<T>] {
        &self.rows
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weight_transform(&self) -> WeightTransform {
        self.config.weight_transform
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Transformed (and standardized) covariates of one area.
    pub fn area_covariates(&self, area: usize) -> &[T] {
        &self.area_x[area * self.n_beta..(area + 1) * self.n_beta]
    }

    pub fn standardization(&self) -> &[Standardization] {
        &self.report
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            n_alpha: self.n_intercepts,
            n_beta: self.n_beta,
            n_xi: self.n_genders,
            lambda: self.config.weight_transform.is_active(),
            m: self.m,
        }
    }

    /// Same design with the outcomes replaced (used by simulation and refits).
    pub fn with_outcomes(&self, y: Vec<bool>) -> Self {
        assert_eq!(y.len(), self.rows.len());
        Self {
            y,
            ..self.clone()
        }
    }

    /// Keeps only the rows selected by `keep` (e.g. leave-one-out refits).
    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            rows: keep.iter().map(|&k| self.rows[k]).collect(),
            y: keep.iter().map(|&k| self.y[k]).collect(),
            ..self.clone()
        }
    }
}
