//! Model fit: design, sampling, diagnostics and area posterior in one call.

use thiserror::Error;

use crate::aggregate::{AggregateError, Aggregator, AreaPosterior};
use crate::data::LinkedDataset;
use crate::diagnostics::{summarize, DiagnosticsTable, DEFAULT_QUANTILES};
use crate::model::{
    HierarchicalModel, ModelConfig, ModelError, NonCentered, Parameterization, PriorConfig,
};
use crate::sampler::{run_chains, DrawsMatrix, SamplerConfig, SamplerError};
use crate::scalar::Real;

pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Clone)]
pub struct Fit<T> {
    pub model: HierarchicalModel<T>,
    pub draws: DrawsMatrix<T>,
    /// One row per sampled parameter plus a derived `sigma_v` row.
    pub diagnostics: DiagnosticsTable<T>,
}

pub fn fit<T: Real>(
    data: &LinkedDataset,
    config: &ModelConfig,
    prior: PriorConfig,
    sampler: &SamplerConfig,
) -> Result<Fit<T>, FitError> {
    let model = HierarchicalModel::<T>::from_dataset(data, config, prior)?;
    let names = model.param_names(data);
    let draws = match config.area_effects {
        Parameterization::Centered => run_chains(&model, names, sampler)?,
        Parameterization::NonCentered => {
            let nc = NonCentered::new(&model);
            run_chains(&nc, names, sampler)?.map_draws(|x| nc.to_centered(x))
        }
    };
    let ls = model.layout().log_sigma_v_index();
    let with_sigma = draws.with_derived("sigma_v", |d| d[ls].exp());
    let diagnostics = summarize(&with_sigma, &DEFAULT_QUANTILES);
    Ok(Fit {
        model,
        draws,
        diagnostics,
    })
}

impl<T: Real> Fit<T> {
    /// Parameters whose split R-hat reaches the threshold.
    pub fn nonconverged(&self) -> Vec<&str> {
        self.diagnostics.nonconverged(RHAT_THRESHOLD)
    }

    pub fn area_posterior(&self, data: &LinkedDataset) -> Result<AreaPosterior<T>, FitError> {
        Ok(Aggregator::new(data).posterior(&self.model, &self.draws)?)
    }
}
