use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::DEFAULT_TAU;
use crate::dataset::SyntheticSpec;
use crate::environment::DiscTrainConfig;
use crate::error::{Error, Result};
use crate::reinforce::TrainConfig;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "DISTRACTOR_CONFIG";

/// Every tunable of a pipeline run. Missing keys in a config file take the
/// values of [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for data generation, environment training and augmentation.
    pub seed: u64,
    pub tau: f64,
    pub lambda: f64,
    pub ratio: f64,
    pub synthetic: SyntheticSpec,
    pub env: DiscTrainConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tau: DEFAULT_TAU,
            lambda: 1.0,
            ratio: 0.5,
            synthetic: SyntheticSpec::default(),
            env: DiscTrainConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Settings for the 2000-item synthetic benchmark at seed 7: narrower
    /// networks than the defaults, with the learning rate scaled up by the
    /// width ratio (4096 / 256) to keep the per-step change in logits similar.
    pub fn fixture() -> Self {
        let mut c = Self {
            seed: 7,
            ..Self::default()
        };
        c.env.hidden = 128;
        c.env.lr = 0.001;
        c.env.adam = true;
        c.train.hidden = 256;
        c.train.lr = 0.16;
        c.train.seed = 7;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// The explicit path if given, else the one named by [`CONFIG_ENV`], else none.
    pub fn config_path(explicit: Option<&Path>) -> Option<PathBuf> {
        explicit.map(Path::to_path_buf).or_else(|| {
            std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
    }

    /// Defaults overlaid with the config file, if any.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match Self::config_path(explicit) {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }
}
