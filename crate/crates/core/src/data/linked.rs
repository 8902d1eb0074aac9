use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{
    parse_census, parse_covariates, parse_survey, write_census, write_covariates, write_survey,
    AreaCovariateTable, CellFrame, CellSchema, CovariateSidecar, DataError, SurveyRecord,
};

/// Survey records linked to census counts and area covariates.
///
/// Records are sorted by (area, dense cell index); ties keep input order.
/// Area indices follow the ascending area-id order of the census table.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedDataset {
    records: Vec<SurveyRecord>,
    record_area: Vec<usize>,
    record_cell: Vec<usize>,
    cells: CellFrame,
    covariates: AreaCovariateTable,
    n_ig: Vec<u32>,
    n_i: Vec<u32>,
}

/// Cross-validates the three tables and computes sample counts.
pub fn link(
    mut records: Vec<SurveyRecord>,
    cells: CellFrame,
    covariates: AreaCovariateTable,
) -> Result<LinkedDataset, DataError> {
    let g = cells.n_cells();
    let schema = cells.schema().clone();
    let mut keyed = Vec::with_capacity(records.len());
    for r in records.drain(..) {
        let a = cells
            .area_index(r.area_id)
            .ok_or(DataError::UnknownArea(r.area_id))?;
        if !covariates.has_area(r.area_id) {
            return Err(DataError::MissingCovariateRow(r.area_id));
        }
        keyed.push((a, schema.index(r.cell), r));
    }
    keyed.sort_by_key(|&(a, c, _)| (a, c));

    let m = cells.m();
    let mut n_ig = vec![0u32; m * g];
    let mut n_i = vec![0u32; m];
    let mut record_area = Vec::with_capacity(keyed.len());
    let mut record_cell = Vec::with_capacity(keyed.len());
    for &(a, c, r) in &keyed {
        n_ig[a * g + c] += 1;
        n_i[a] += 1;
        record_area.push(a);
        record_cell.push(c);
        records.push(r);
    }
    Ok(LinkedDataset {
        records,
        record_area,
        record_cell,
        cells,
        covariates,
        n_ig,
        n_i,
    })
}

/// Locations of the four input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub survey: PathBuf,
    pub census: PathBuf,
    pub covariates: PathBuf,
    /// Optional transform sidecar; all identity when absent.
    pub sidecar: Option<PathBuf>,
}

impl DatasetPaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            survey: dir.join("survey.csv"),
            census: dir.join("census.csv"),
            covariates: dir.join("area_covariates.csv"),
            sidecar: Some(dir.join("area_covariates.toml")),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, DataError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

impl LinkedDataset {
    pub fn load(paths: &DatasetPaths, schema: &CellSchema) -> Result<Self, DataError> {
        let sidecar = match &paths.sidecar {
            Some(p) if p.exists() => CovariateSidecar::from_toml(
                &fs::read_to_string(p).map_err(|e| DataError::Io(format!("{}: {e}", p.display())))?,
            )?,
            _ => CovariateSidecar::default(),
        };
        let records = parse_survey(open(&paths.survey)?, schema)?;
        let cells = parse_census(open(&paths.census)?, schema)?;
        let covariates = parse_covariates(open(&paths.covariates)?, &sidecar)?;
        link(records, cells, covariates)
    }

    /// Writes the four files under their conventional names in `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir)?;
        let p = DatasetPaths::in_dir(dir);
        fs::write(&p.survey, self.survey_csv()?)?;
        fs::write(&p.census, self.census_csv()?)?;
        fs::write(&p.covariates, self.covariates_csv()?)?;
        fs::write(p.sidecar.as_ref().unwrap(), self.covariates.sidecar().to_toml())?;
        Ok(())
    }

    pub fn survey_csv(&self) -> Result<Vec<u8>, DataError> {
        let mut buf = Vec::new();
        write_survey(&mut buf, &self.records, self.schema())?;
        Ok(buf)
    }

    pub fn census_csv(&self) -> Result<Vec<u8>, DataError> {
        let mut buf = Vec::new();
        write_census(&mut buf, &self.cells)?;
        Ok(buf)
    }

    pub fn covariates_csv(&self) -> Result<Vec<u8>, DataError> {
        let mut buf = Vec::new();
        write_covariates(&mut buf, &self.covariates)?;
        Ok(buf)
    }

    /// SHA-256 over the canonical serialization of all tables.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.survey_csv().expect("in-memory write"),
            self.census_csv().expect("in-memory write"),
            self.covariates_csv().expect("in-memory write"),
            self.covariates.sidecar().to_toml().into_bytes(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(&part);
        }
        hex::encode(h.finalize())
    }

    pub fn schema(&self) -> &CellSchema {
        self.cells.schema()
    }

    pub fn records(&self) -> &[SurveyRecord] {
        &self.records
    }

    pub fn cells(&self) -> &CellFrame {
        &self.cells
    }

    pub fn covariates(&self) -> &AreaCovariateTable {
        &self.covariates
    }

    pub fn m(&self) -> usize {
        self.cells.m()
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.n_cells()
    }

    /// Area index (into `cells().areas()`) of record `k`.
    pub fn record_area(&self, k: usize) -> usize {
        self.record_area[k]
    }

    /// Dense cell index of record `k`.
    pub fn record_cell(&self, k: usize) -> usize {
        self.record_cell[k]
    }

    pub fn n_ig(&self, area: usize, cell: usize) -> u32 {
        self.n_ig[area * self.n_cells() + cell]
    }

    pub fn n_i(&self, area: usize) -> u32 {
        self.n_i[area]
    }

    /// Number of cells represented in the sample for `area` (`G_i`).
    pub fn g_i(&self, area: usize) -> usize {
        let g = self.n_cells();
        self.n_ig[area * g..(area + 1) * g].iter().filter(|&&c| c > 0).count()
    }

    /// Contiguous record range of one area.
    pub fn area_records(&self, area: usize) -> std::ops::Range<usize> {
        let start = self.record_area.partition_point(|&a| a < area);
        let end = self.record_area.partition_point(|&a| a <= area);
        start..end
    }
}
