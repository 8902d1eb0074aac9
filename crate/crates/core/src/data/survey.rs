use std::io::{Read, Write};

use super::error::collect_rows;
use super::{CellKey, CellSchema, DataError};

/// One survey respondent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyRecord {
    pub area_id: u32,
    pub cell: CellKey,
    pub y: bool,
    pub weight: f64,
}

impl SurveyRecord {
    /// Age band `1..=7`, used by the model as a continuous covariate.
    pub fn age_band(&self) -> u8 {
        self.cell.age_band
    }
}

pub const SURVEY_COLUMNS: [&str; 7] = [
    "area_id",
    "race",
    "ethnicity",
    "gender",
    "age_band",
    "y",
    "weight",
];

pub(crate) fn column_indices(
    headers: &csv::StringRecord,
    wanted: &[&str],
) -> Result<Vec<usize>, DataError> {
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(w))
                .ok_or_else(|| DataError::MissingColumn(w.to_string()))
        })
        .collect()
}

pub(crate) fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

pub(crate) fn parse_area(row: usize, v: &str) -> Result<u32, DataError> {
    v.parse().map_err(|_| DataError::BadNumber {
        row,
        column: "area_id".into(),
        value: v.to_string(),
    })
}

/// Parses `area_id,race,ethnicity,gender,age_band,y,weight`.
///
/// Every row is checked; if any fail, all row errors are returned together.
pub fn parse_survey<R: Read>(source: R, schema: &CellSchema) -> Result<Vec<SurveyRecord>, DataError> {
    let mut rdr = reader(source);
    let cols = column_indices(rdr.headers()?, &SURVEY_COLUMNS)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        match parse_row(row, schema, &rec, &cols) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(e),
        }
    }
    collect_rows(records, errors)
}

fn parse_row(
    row: usize,
    schema: &CellSchema,
    rec: &csv::StringRecord,
    cols: &[usize],
) -> Result<SurveyRecord, DataError> {
    let f = |j: usize| rec.get(cols[j]).unwrap_or("");
    let area_id = parse_area(row, f(0))?;
    let cell = schema.parse_key(row, f(1), f(2), f(3), f(4))?;
    let y = match f(5) {
        "0" => false,
        "1" => true,
        other => {
            return Err(DataError::NonBinaryOutcome {
                row,
                value: other.to_string(),
            })
        }
    };
    let raw_w = f(6);
    let weight: f64 = raw_w.parse().map_err(|_| DataError::BadNumber {
        row,
        column: "weight".into(),
        value: raw_w.to_string(),
    })?;
    if !(weight.is_finite() && weight > 0.0) {
        return Err(DataError::NonpositiveWeight {
            row,
            value: raw_w.to_string(),
        });
    }
    Ok(SurveyRecord {
        area_id,
        cell,
        y,
        weight,
    })
}

/// Writes records in the same layout `parse_survey` reads. Floats use the
/// shortest representation that parses back to the identical value.
pub fn write_survey<W: Write>(
    sink: W,
    records: &[SurveyRecord],
    schema: &CellSchema,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SURVEY_COLUMNS)?;
    for r in records {
        let k = r.cell;
        w.write_record([
            r.area_id.to_string().as_str(),
            &schema.races[k.race as usize],
            &schema.ethnicities[k.ethnicity as usize],
            &schema.genders[k.gender as usize],
            &k.age_band.to_string(),
            if r.y { "1" } else { "0" },
            &r.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
