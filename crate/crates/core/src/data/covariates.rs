use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::survey::{parse_area, reader};
use super::error::collect_rows;
use super::DataError;

/// Transform applied to an area covariate before it enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateTransform {
    #[default]
    Identity,
    Logit,
}

impl CovariateTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            CovariateTransform::Identity => x,
            CovariateTransform::Logit => (x / (1.0 - x)).ln(),
        }
    }
}

/// Sidecar declaring the transform of each covariate column. Columns that are
/// not listed use the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSidecar {
    #[serde(default)]
    pub transforms: BTreeMap<String, CovariateTransform>,
}

impl CovariateSidecar {
    pub fn from_toml(s: &str) -> Result<Self, DataError> {
        toml::from_str(s).map_err(|e| DataError::Schema(format!("covariate sidecar: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sidecar serializes")
    }
}

/// Raw area-level covariates keyed by area id, plus their declared transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaCovariateTable {
    names: Vec<String>,
    transforms: Vec<CovariateTransform>,
    rows: BTreeMap<u32, Vec<f64>>,
}

impl AreaCovariateTable {
    pub fn new(
        names: Vec<String>,
        transforms: Vec<CovariateTransform>,
        rows: BTreeMap<u32, Vec<f64>>,
    ) -> Result<Self, DataError> {
        if names.len() != transforms.len() {
            return Err(DataError::Schema("one transform per covariate".into()));
        }
        for (&area, row) in &rows {
            if row.len() != names.len() {
                return Err(DataError::Schema(format!(
                    "area {area}: {} values for {} covariates",
                    row.len(),
                    names.len()
                )));
            }
            for ((name, t), &v) in names.iter().zip(&transforms).zip(row) {
                let ok = match t {
                    CovariateTransform::Logit => v > 0.0 && v < 1.0,
                    CovariateTransform::Identity => v.is_finite(),
                };
                if !ok {
                    return Err(DataError::CovariateOutOfRange {
                        area,
                        column: name.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            names,
            transforms,
            rows,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn transform(&self, col: usize) -> CovariateTransform {
        self.transforms[col]
    }

    pub fn has_area(&self, area_id: u32) -> bool {
        self.rows.contains_key(&area_id)
    }

    pub fn areas(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    pub fn raw(&self, area_id: u32, col: usize) -> Option<f64> {
        self.rows.get(&area_id).map(|r| r[col])
    }

    /// Covariate value after its declared transform.
    pub fn transformed(&self, area_id: u32, col: usize) -> Option<f64> {
        self.raw(area_id, col).map(|v| self.transforms[col].apply(v))
    }

    pub fn sidecar(&self) -> CovariateSidecar {
        CovariateSidecar {
            transforms: self
                .names
                .iter()
                .cloned()
                .zip(self.transforms.iter().copied())
                .collect(),
        }
    }
}

/// Parses `area_id,<name1>,<name2>,...` with transforms taken from `sidecar`.
pub fn parse_covariates<R: Read>(
    source: R,
    sidecar: &CovariateSidecar,
) -> Result<AreaCovariateTable, DataError> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let area_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("area_id"))
        .ok_or_else(|| DataError::MissingColumn("area_id".into()))?;
    let value_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != area_col).collect();
    let names: Vec<String> = value_cols.iter().map(|&c| headers[c].to_string()).collect();
    if let Some(unknown) = sidecar.transforms.keys().find(|k| !names.contains(k)) {
        return Err(DataError::UnknownCovariate(unknown.clone()));
    }
    let transforms = names
        .iter()
        .map(|n| sidecar.transforms.get(n).copied().unwrap_or_default())
        .collect();

    let mut rows = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let area = match parse_area(row, rec.get(area_col).unwrap_or("")) {
            Ok(a) => a,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mut vals = Vec::with_capacity(value_cols.len());
        for (&c, name) in value_cols.iter().zip(&names) {
            let raw = rec.get(c).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => vals.push(v),
                _ => errors.push(DataError::BadNumber {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                }),
            }
        }
        if vals.len() == value_cols.len() && rows.insert(area, vals).is_some() {
            errors.push(DataError::DuplicateArea { row, area });
        }
    }
    collect_rows(Vec::<()>::new(), errors)?;
    AreaCovariateTable::new(names, transforms, rows)
}

pub fn write_covariates<W: Write>(sink: W, table: &AreaCovariateTable) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["area_id".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (area, vals) in &table.rows {
        let mut rec = vec![area.to_string()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sidecar() -> CovariateSidecar {
        CovariateSidecar::from_toml("[transforms]\ncomorbidity = \"logit\"\n").unwrap()
    }

    #[test]
    fn applies_declared_transforms() {
        let t = parse_covariates(
            "area_id,comorbidity,pct_republican\n1,0.5,0.4\n2,0.25,0.6\n".as_bytes(),
            &sidecar(),
        )
        .unwrap();
        assert_eq!(t.names(), ["comorbidity", "pct_republican"]);
        assert_eq!(t.transformed(1, 0), Some(0.0));
        assert!((t.transformed(2, 0).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert_eq!(t.transformed(2, 1), Some(0.6));
        assert_eq!(t.transformed(3, 1), None);
    }

    #[test]
    fn logit_column_must_be_a_rate() {
        let e = parse_covariates("area_id,comorbidity\n1,1.0\n".as_bytes(), &sidecar()).unwrap_err();
        assert!(matches!(e, DataError::CovariateOutOfRange { area: 1, .. }));
    }

    #[test]
    fn sidecar_must_name_real_columns() {
        let e = parse_covariates("area_id,flu\n1,0.2\n".as_bytes(), &sidecar()).unwrap_err();
        assert_eq!(e, DataError::UnknownCovariate("comorbidity".into()));
    }

    #[test]
    fn duplicate_area_rows_are_rejected() {
        let e = parse_covariates("area_id,x\n1,0.2\n1,0.3\n".as_bytes(), &CovariateSidecar::default())
            .unwrap_err();
        assert_eq!(e, DataError::DuplicateArea { row: 2, area: 1 });
    }
}
