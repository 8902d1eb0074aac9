use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Factor levels that define the demographic cells.
///
/// Intercept blocks are race-major then ethnicity, so with the default levels
/// White-NonHispanic is intercept 0 and White-Hispanic is intercept 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSchema {
    pub races: Vec<String>,
    pub ethnicities: Vec<String>,
    pub genders: Vec<String>,
    pub age_bands: u8,
}

impl Default for CellSchema {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            races: s(&["White", "Black", "Asian", "Other"]),
            ethnicities: s(&["NonHispanic", "Hispanic"]),
            genders: s(&["Male", "Female"]),
            age_bands: 7,
        }
    }
}

/// A demographic cell; factor levels are indices into the [`CellSchema`].
/// `age_band` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub race: u8,
    pub ethnicity: u8,
    pub gender: u8,
    pub age_band: u8,
}

impl CellSchema {
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, levels) in [
            ("race", &self.races),
            ("ethnicity", &self.ethnicities),
            ("gender", &self.genders),
        ] {
            if levels.is_empty() || levels.len() > u8::MAX as usize {
                return Err(DataError::Schema(format!("`{name}` needs 1..=255 levels")));
            }
            let mut lower: Vec<String> = levels.iter().map(|l| l.to_lowercase()).collect();
            lower.sort();
            lower.dedup();
            if lower.len() != levels.len() {
                return Err(DataError::Schema(format!(
                    "`{name}` levels must be distinct ignoring case"
                )));
            }
        }
        if self.age_bands == 0 {
            return Err(DataError::Schema("need at least one age band".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.races.len() * self.ethnicities.len() * self.genders.len() * self.age_bands as usize
    }

    /// Number of race x ethnicity intercepts.
    pub fn n_intercepts(&self) -> usize {
        self.races.len() * self.ethnicities.len()
    }

    pub fn n_genders(&self) -> usize {
        self.genders.len()
    }

    /// Dense index in `0..n_cells()`.
    pub fn index(&self, k: CellKey) -> usize {
        let (ne, ng, na) = (
            self.ethnicities.len(),
            self.genders.len(),
            self.age_bands as usize,
        );
        ((k.race as usize * ne + k.ethnicity as usize) * ng + k.gender as usize) * na
            + (k.age_band as usize - 1)
    }

    pub fn key(&self, index: usize) -> CellKey {
        let (ne, ng, na) = (
            self.ethnicities.len(),
            self.genders.len(),
            self.age_bands as usize,
        );
        let age = index % na;
        let rest = index / na;
        let gender = rest % ng;
        let rest = rest / ng;
        CellKey {
            race: (rest / ne) as u8,
            ethnicity: (rest % ne) as u8,
            gender: gender as u8,
            age_band: age as u8 + 1,
        }
    }

    pub fn intercept_index(&self, k: CellKey) -> usize {
        k.race as usize * self.ethnicities.len() + k.ethnicity as usize
    }

    pub fn intercept_label(&self, idx: usize) -> String {
        let ne = self.ethnicities.len();
        format!("{}:{}", self.races[idx / ne], self.ethnicities[idx % ne])
    }

    pub fn keys(&self) -> impl Iterator<Item = CellKey> + '_ {
        (0..self.n_cells()).map(|i| self.key(i))
    }

    /// Builds a key from raw CSV fields; `row` is only used for error reporting.
    pub fn parse_key(
        &self,
        row: usize,
        race: &str,
        ethnicity: &str,
        gender: &str,
        age_band: &str,
    ) -> Result<CellKey, DataError> {
        let level = |column: &str, levels: &[String], value: &str| {
            levels
                .iter()
                .position(|l| l.eq_ignore_ascii_case(value))
                .map(|i| i as u8)
                .ok_or_else(|| DataError::BadEnumLevel {
                    row,
                    column: column.to_string(),
                    value: value.to_string(),
                })
        };
        let race = level("race", &self.races, race)?;
        let ethnicity = level("ethnicity", &self.ethnicities, ethnicity)?;
        let gender = level("gender", &self.genders, gender)?;
        let age_band = match age_band.parse::<u8>() {
            Ok(a) if (1..=self.age_bands).contains(&a) => a,
            _ => {
                return Err(DataError::BadEnumLevel {
                    row,
                    column: "age_band".into(),
                    value: age_band.to_string(),
                })
            }
        };
        Ok(CellKey {
            race,
            ethnicity,
            gender,
            age_band,
        })
    }

    pub fn display(&self, k: CellKey) -> CellDisplay<'_> {
        CellDisplay { schema: self, key: k }
    }
}

pub struct CellDisplay<'a> {
    schema: &'a CellSchema,
    key: CellKey,
}

impl fmt::Display for CellDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s, k) = (self.schema, self.key);
        write!(
            f,
            "{},{},{},{}",
            s.races[k.race as usize],
            s.ethnicities[k.ethnicity as usize],
            s.genders[k.gender as usize],
            k.age_band
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_index_is_a_bijection() {
        let s = CellSchema::default();
        assert_eq!(s.n_cells(), 112);
        let mut seen = vec![false; 112];
        for i in 0..112 {
            let k = s.key(i);
            assert!((1..=7).contains(&k.age_band));
            assert_eq!(s.index(k), i);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn intercept_ordering_is_race_major() {
        let s = CellSchema::default();
        let k = s.parse_key(1, "white", "NONHISPANIC", "male", "3").unwrap();
        assert_eq!(s.intercept_index(k), 0);
        let k = s.parse_key(1, "White", "Hispanic", "Male", "3").unwrap();
        assert_eq!(s.intercept_index(k), 1);
        let k = s.parse_key(1, "Black", "NonHispanic", "Female", "1").unwrap();
        assert_eq!(s.intercept_index(k), 2);
        assert_eq!(s.intercept_label(7), "Other:Hispanic");
    }

    #[test]
    fn rejects_unknown_levels() {
        let s = CellSchema::default();
        assert!(matches!(
            s.parse_key(4, "Martian", "Hispanic", "Male", "3"),
            Err(DataError::BadEnumLevel { row: 4, .. })
        ));
        assert!(s.parse_key(1, "White", "Hispanic", "Male", "8").is_err());
        assert!(s.parse_key(1, "White", "Hispanic", "Male", "0").is_err());
        assert!(s.parse_key(1, "White", "", "Male", "1").is_err());
    }
}
