//! Survey-weighted direct (Hajek) estimates of area proportions.
//!
//! The standard error is the weight-normalized linearization
//! `se^2 = sum w^2 (y - p)^2 / (sum w)^2`, without finite-population or
//! small-sample corrections.

use thiserror::Error;

use crate::data::{LinkedDataset, SurveyRecord};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectError {
    #[error("area {0} has no sampled records")]
    NoSample(u32),
}

/// Direct estimate for one area. `estimate` and `se` are `None` when the area
/// has no sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectEstimate<T> {
    pub area_id: u32,
    pub estimate: Option<T>,
    pub se: Option<T>,
    pub n: usize,
}

impl<T> DirectEstimate<T> {
    pub fn no_sample(&self) -> bool {
        self.n == 0
    }
}

pub fn direct_estimate<T: Real>(
    area_id: u32,
    records: &[SurveyRecord],
) -> Result<DirectEstimate<T>, DirectError> {
    if records.is_empty() {
        return Err(DirectError::NoSample(area_id));
    }
    let w = |r: &SurveyRecord| T::lit(r.weight);
    let y = |r: &SurveyRecord| if r.y { T::one() } else { T::zero() };
    let total: T = records.iter().map(w).sum();
    let p = records.iter().map(|r| w(r) * y(r)).sum::<T>() / total;
    let p = p.min(T::one()).max(T::zero());
    let ss: T = records
        .iter()
        .map(|r| {
            let d = w(r) * (y(r) - p);
            d * d
        })
        .sum();
    Ok(DirectEstimate {
        area_id,
        estimate: Some(p),
        se: Some(ss.sqrt() / total),
        n: records.len(),
    })
}

/// One row per census area, ordered by area id.
pub fn direct_table<T: Real>(data: &LinkedDataset) -> Vec<DirectEstimate<T>> {
    data.cells()
        .areas()
        .iter()
        .enumerate()
        .map(|(a, &area_id)| {
            let recs = &data.records()[data.area_records(a)];
            direct_estimate(area_id, recs).unwrap_or(DirectEstimate {
                area_id,
                estimate: None,
                se: None,
                n: 0,
            })
        })
        .collect()
}
