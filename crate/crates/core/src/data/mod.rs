//! Ingestion and linkage of the survey, census, and area-covariate tables.

mod census;
mod cell;
mod covariates;
mod error;
mod linked;
mod survey;

pub use census::{parse_census, write_census, CellFrame, CENSUS_COLUMNS};
pub use cell::{CellKey, CellSchema};
pub use covariates::{
    parse_covariates, write_covariates, AreaCovariateTable, CovariateSidecar, CovariateTransform,
};
pub use error::DataError;
pub use linked::{link, DatasetPaths, LinkedDataset};
pub use survey::{parse_survey, write_survey, SurveyRecord, SURVEY_COLUMNS};
