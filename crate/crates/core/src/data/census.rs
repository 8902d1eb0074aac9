use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::error::collect_rows;
use super::survey::{column_indices, parse_area, reader};
use super::{CellKey, CellSchema, DataError};

pub const CENSUS_COLUMNS: [&str; 6] = ["area_id", "race", "ethnicity", "gender", "age_band", "count"];

/// Dense census population counts `N_ig`, one full row of cells per area.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFrame {
    schema: CellSchema,
    areas: Vec<u32>,
    counts: Vec<u64>,
    totals: Vec<u64>,
    missing_filled: usize,
}

impl CellFrame {
    /// Builds a frame from dense per-area count rows (each of length `n_cells`).
    pub fn from_dense(
        schema: CellSchema,
        rows: BTreeMap<u32, Vec<u64>>,
    ) -> Result<Self, DataError> {
        schema.validate()?;
        let g = schema.n_cells();
        let mut areas = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len() * g);
        let mut totals = Vec::with_capacity(rows.len());
        for (area, row) in rows {
            if row.len() != g {
                return Err(DataError::Schema(format!(
                    "area {area} has {} cells, expected {g}",
                    row.len()
                )));
            }
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(DataError::AreaWithZeroPopulation(area));
            }
            areas.push(area);
            totals.push(total);
            counts.extend(row);
        }
        Ok(Self {
            schema,
            areas,
            counts,
            totals,
            missing_filled: 0,
        })
    }

    pub fn schema(&self) -> &CellSchema {
        &self.schema
    }

    /// Area identifiers in ascending order; position is the area index.
    pub fn areas(&self) -> &[u32] {
        &self.areas
    }

    pub fn m(&self) -> usize {
        self.areas.len()
    }

    pub fn n_cells(&self) -> usize {
        self.schema.n_cells()
    }

    pub fn area_index(&self, area_id: u32) -> Option<usize> {
        self.areas.binary_search(&area_id).ok()
    }

    /// `N_ig` by area index and dense cell index.
    pub fn count(&self, area: usize, cell: usize) -> u64 {
        self.counts[area * self.n_cells() + cell]
    }

    pub fn area_counts(&self, area: usize) -> &[u64] {
        let g = self.n_cells();
        &self.counts[area * g..(area + 1) * g]
    }

    /// `N_i`.
    pub fn total(&self, area: usize) -> u64 {
        self.totals[area]
    }

    /// Number of (area, cell) combinations that were absent from the input and set to 0.
    pub fn missing_filled(&self) -> usize {
        self.missing_filled
    }
}

/// Parses `area_id,race,ethnicity,gender,age_band,count` into a dense frame.
pub fn parse_census<R: Read>(source: R, schema: &CellSchema) -> Result<CellFrame, DataError> {
    schema.validate()?;
    let mut rdr = reader(source);
    let cols = column_indices(rdr.headers()?, &CENSUS_COLUMNS)?;
    let g = schema.n_cells();
    let mut rows: BTreeMap<u32, Vec<Option<u64>>> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let f = |j: usize| rec.get(cols[j]).unwrap_or("");
        let parsed = (|| {
            let area = parse_area(row, f(0))?;
            let key = schema.parse_key(row, f(1), f(2), f(3), f(4))?;
            let raw = f(5);
            let count = match raw.parse::<i64>() {
                Ok(c) if c < 0 => {
                    return Err(DataError::NegativeCount {
                        row,
                        value: raw.to_string(),
                    })
                }
                Ok(c) => c as u64,
                Err(_) => {
                    return Err(DataError::BadNumber {
                        row,
                        column: "count".into(),
                        value: raw.to_string(),
                    })
                }
            };
            Ok::<(u32, CellKey, u64), DataError>((area, key, count))
        })();
        match parsed {
            Ok((area, key, count)) => {
                let slot = &mut rows.entry(area).or_insert_with(|| vec![None; g])[schema.index(key)];
                if slot.is_some() {
                    errors.push(DataError::DuplicateCell {
                        row,
                        area,
                        cell: schema.display(key).to_string(),
                    });
                } else {
                    *slot = Some(count);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    collect_rows(Vec::<()>::new(), errors)?;

    let mut missing = 0usize;
    let dense = rows
        .into_iter()
        .map(|(area, cells)| {
            let row = cells
                .into_iter()
                .map(|c| {
                    c.unwrap_or_else(|| {
                        missing += 1;
                        0
                    })
                })
                .collect();
            (area, row)
        })
        .collect();
    if missing > 0 {
        log::warn!("census: {missing} absent (area, cell) rows set to 0");
    }
    let mut frame = CellFrame::from_dense(schema.clone(), dense)?;
    frame.missing_filled = missing;
    Ok(frame)
}

pub fn write_census<W: Write>(sink: W, frame: &CellFrame) -> Result<(), DataError> {
    let schema = frame.schema();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CENSUS_COLUMNS)?;
    for (a, &area) in frame.areas().iter().enumerate() {
        for (c, &n) in frame.area_counts(a).iter().enumerate() {
            let k = schema.key(c);
            w.write_record([
                area.to_string().as_str(),
                &schema.races[k.race as usize],
                &schema.ethnicities[k.ethnicity as usize],
                &schema.genders[k.gender as usize],
                &k.age_band.to_string(),
                &n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
