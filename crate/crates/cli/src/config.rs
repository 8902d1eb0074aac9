//! Run configuration: a TOML file whose relative paths resolve against the
//! file's own directory. Command-line flags override individual keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sae_core::data::{CellSchema, DatasetPaths};
use sae_core::model::{ModelConfig, Parameterization, PriorConfig, WeightTransform};
use sae_core::sampler::SamplerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding the default file names; individual paths override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub census: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
    #[serde(default)]
    pub schema: CellSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `M1`..`M4`; ignored when `area_covariates` is given.
    pub preset: Option<String>,
    pub area_covariates: Option<Vec<String>>,
    pub weight_transform: Option<WeightTransform>,
    pub standardize: bool,
    pub area_effects: Parameterization,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: Some("M3".into()),
            area_covariates: None,
            weight_transform: None,
            standardize: true,
            area_effects: Parameterization::default(),
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig, CliError> {
        let mut cfg = match (&self.area_covariates, &self.preset) {
            (Some(covs), _) => ModelConfig {
                area_covariates: covs.clone(),
                weight_transform: WeightTransform::Identity,
                standardize: true,
                area_effects: Parameterization::default(),
            },
            (None, Some(p)) => ModelConfig::preset(p)?,
            (None, None) => {
                return Err(CliError::Config("model needs `preset` or `area_covariates`".into()))
            }
        };
        if let Some(t) = self.weight_transform {
            cfg.weight_transform = t;
        }
        cfg.standardize = self.standardize;
        cfg.area_effects = self.area_effects;
        Ok(cfg)
    }

    /// Short name used in comparison tables.
    pub fn label(&self) -> String {
        let base = match (&self.area_covariates, &self.preset) {
            (None, Some(p)) => p.to_uppercase(),
            _ => "custom".into(),
        };
        match self.weight_transform {
            Some(t) if self.area_covariates.is_some() || self.preset.is_none() => format!("{base}-{t}"),
            Some(t) => {
                let preset_t = self
                    .preset
                    .as_deref()
                    .and_then(|p| ModelConfig::preset(p).ok())
                    .map(|c| c.weight_transform);
                if preset_t == Some(t) {
                    base
                } else {
                    format!("{base}-{t}")
                }
            }
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub allow_nonconverged: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.data.dir);
        fix(&mut self.data.survey);
        fix(&mut self.data.census);
        fix(&mut self.data.covariates);
        fix(&mut self.data.sidecar);
        fix(&mut self.output);
    }

    pub fn dataset_paths(&self) -> Result<DatasetPaths, CliError> {
        let d = &self.data;
        let defaults = d.dir.as_deref().map(DatasetPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, default: Option<PathBuf>, name: &str| {
            explicit
                .clone()
                .or(default)
                .ok_or_else(|| CliError::Config(format!("data.{name} or data.dir is required")))
        };
        let sidecar = match &d.sidecar {
            Some(p) => Some(p.clone()),
            None => defaults
                .as_ref()
                .and_then(|p| p.sidecar.clone())
                .filter(|p| p.exists()),
        };
        Ok(DatasetPaths {
            survey: pick(&d.survey, defaults.as_ref().map(|p| p.survey.clone()), "survey")?,
            census: pick(&d.census, defaults.as_ref().map(|p| p.census.clone()), "census")?,
            covariates: pick(
                &d.covariates,
                defaults.as_ref().map(|p| p.covariates.clone()),
                "covariates",
            )?,
            sidecar,
        })
    }

    /// Snapshot written next to the artifacts; the output directory is left
    /// out so identical runs into different directories match byte for byte.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        toml::to_string(&c).expect("config serializes")
    }
}
