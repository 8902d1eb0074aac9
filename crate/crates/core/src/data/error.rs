use thiserror::Error;

/// Errors raised while ingesting or linking the input tables.
///
/// Row numbers count data rows from 1 (the header is not counted).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: `{value}` is not a level of `{column}`")]
    BadEnumLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: weight `{value}` is not positive and finite")]
    NonpositiveWeight { row: usize, value: String },
    #[error("row {row}: outcome must be 0 or 1, got `{value}`")]
    NonBinaryOutcome { row: usize, value: String },
    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: negative count `{value}`")]
    NegativeCount { row: usize, value: String },
    #[error("row {row}: duplicate cell {cell} for area {area}")]
    DuplicateCell { row: usize, area: u32, cell: String },
    #[error("area {0} has zero total population")]
    AreaWithZeroPopulation(u32),
    #[error("area {0} does not appear in the census table")]
    UnknownArea(u32),
    #[error("area {0} has no covariate row")]
    MissingCovariateRow(u32),
    #[error("row {row}: duplicate covariate row for area {area}")]
    DuplicateArea { row: usize, area: u32 },
    #[error("area {area}: covariate `{column}` = {value} must lie in (0, 1) for a logit transform")]
    CovariateOutOfRange {
        area: u32,
        column: String,
        value: f64,
    },
    #[error("sidecar names column `{0}` which is not in the covariate table")]
    UnknownCovariate(String),
    #[error("bad cell schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{} row-level error(s), first: {}", .0.len(), .0[0])]
    Rows(Vec<DataError>),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

impl DataError {
    /// Row-level errors carried by this error (itself, unless it aggregates several).
    pub fn rows(&self) -> &[DataError] {
        match self {
            DataError::Rows(v) => v,
            other => std::slice::from_ref(other),
        }
    }
}

pub(crate) fn collect_rows<T>(items: Vec<T>, errors: Vec<DataError>) -> Result<Vec<T>, DataError> {
    match errors.len() {
        0 => Ok(items),
        1 => Err(errors.into_iter().next().unwrap()),
        _ => Err(DataError::Rows(errors)),
    }
}
