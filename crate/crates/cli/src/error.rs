use thiserror::Error;

use sae_core::data::DataError;
use sae_core::fit::FitError;
use sae_core::loo::LooError;
use sae_core::model::ModelError;
use sae_core::sampler::SamplerError;
use sae_core::sim::SimError;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Convergence(_) => 4,
            Self::Internal(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownPreset(_) | ModelError::Config(_) => Self::Config(e.to_string()),
            ModelError::UnknownCovariate(_)
            | ModelError::DegenerateCovariate(_)
            | ModelError::NonpositiveWeight(_) => Self::Data(e.to_string()),
            _ => Self::Internal(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::InvalidConfig(_) => Self::Config(e.to_string()),
            SamplerError::DivergenceRateExceeded { .. } => Self::Convergence(e.to_string()),
            SamplerError::NonFiniteStart { .. } => Self::Internal(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Model(e) => e.into(),
            FitError::Sampler(e) => e.into(),
            FitError::Aggregate(e) => Self::Internal(e.to_string()),
        }
    }
}

impl From<LooError> for CliError {
    fn from(e: LooError) -> Self {
        match e {
            LooError::MismatchedObservations(..) | LooError::BadMagic | LooError::NonFiniteEntry { .. } => {
                Self::Data(e.to_string())
            }
            _ => Self::Internal(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Self::Config(e.to_string()),
            SimError::Data(e) => e.into(),
            SimError::Fit(e) => e.into(),
            SimError::EmptySample | SimError::InsufficientReplicates(_) => Self::Data(e.to_string()),
        }
    }
}
