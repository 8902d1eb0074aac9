use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::Real;

pub const COMORBIDITY: &str = "comorbidity";
pub const FLU_SHOT: &str = "flu_shot";
pub const TEST_RATE: &str = "test_rate";
pub const POSITIVITY: &str = "positivity";
pub const PCT_REPUBLICAN: &str = "pct_republican";

/// Function of the survey weight entering the linear predictor as `lambda * h(w)`.
/// `None` drops the term (non-informative sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightTransform {
    #[serde(alias = "id")]
    Identity,
    Log,
    #[serde(alias = "inv")]
    Inverse,
    None,
}

impl WeightTransform {
    /// `h(w)`, or `Ok(None)` when the term is dropped.
    pub fn apply<T: Real>(self, w: T) -> Result<Option<T>, ModelError> {
        if !(w > T::zero() && w.is_finite()) {
            return Err(ModelError::NonpositiveWeight(w.as_f64()));
        }
        Ok(match self {
            WeightTransform::Identity => Some(w),
            WeightTransform::Log => Some(w.ln()),
            WeightTransform::Inverse => Some(w.recip()),
            WeightTransform::None => None,
        })
    }

    pub fn is_active(self) -> bool {
        self != WeightTransform::None
    }
}

impl FromStr for WeightTransform {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "id" | "identity" => Ok(Self::Identity),
            "log" => Ok(Self::Log),
            "inv" | "inverse" => Ok(Self::Inverse),
            "none" => Ok(Self::None),
            _ => Err(ModelError::Config(format!("unknown weight transform `{s}`"))),
        }
    }
}

impl fmt::Display for WeightTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "id",
            Self::Log => "log",
            Self::Inverse => "inv",
            Self::None => "none",
        })
    }
}

fn default_true() -> bool {
    true
}

/// Which blocks enter the linear predictor. Race x ethnicity intercepts and
/// gender-specific age slopes are always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Area covariate columns, in the order their coefficients are laid out.
    pub area_covariates: Vec<String>,
    pub weight_transform: WeightTransform,
    /// Center and scale continuous covariates (area covariates, age, h(w)).
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub area_effects: Parameterization,
}

/// Coordinates in which the sampler sees the area effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Centered,
    /// `v = sigma_v z` with `z` sampled; draws are reported as `v`.
    #[default]
    NonCentered,
}

impl ModelConfig {
    /// The four competing model specifications `M1`..`M4`.
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        let covs: &[&str] = match name.to_ascii_uppercase().as_str() {
            "M1" => &[COMORBIDITY, FLU_SHOT, TEST_RATE, POSITIVITY, PCT_REPUBLICAN],
            "M2" => &[COMORBIDITY, TEST_RATE, PCT_REPUBLICAN],
            "M3" | "M4" => &[COMORBIDITY, PCT_REPUBLICAN],
            _ => return Err(ModelError::UnknownPreset(name.to_string())),
        };
        let weight_transform = if name.eq_ignore_ascii_case("M4") {
            WeightTransform::None
        } else {
            WeightTransform::Identity
        };
        Ok(Self {
            area_covariates: covs.iter().map(|s| s.to_string()).collect(),
            weight_transform,
            standardize: true,
            area_effects: Parameterization::default(),
        })
    }

    pub fn with_weight_transform(mut self, t: WeightTransform) -> Self {
        self.weight_transform = t;
        self
    }
}

/// Prior scales: `Normal(0, coef_sd^2)` on every fixed coefficient and
/// `HalfNormal(0, sigma_v_scale)` on the area-effect standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub coef_sd: f64,
    pub sigma_v_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coef_sd: 5.0,
            sigma_v_scale: 1.0,
        }
    }
}
