//! TOML configuration. Every section and key is optional.
//!
//! ```toml
//! [aggregation]
//! window_w = 4
//! func = "max"
//!
//! [render]
//! colormap = "heat"
//! cancer_threshold = 0.6
//! til_threshold = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tilmap_core::concord::BootstrapConfig;
use tilmap_core::gridmap::{AggregationConfig, AggregationFunc, TissueConfig};
use tilmap_core::patchprep::TransformConfig;

use crate::error::{AtlasError, Result};
use crate::render::Colormap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Colormap for single-map renders.
    pub colormap: Colormap,
    pub cancer_threshold: f64,
    /// Used only where a binary TIL call is needed: the paper colormap,
    /// combined maps and stats.
    pub til_threshold: f64,
    /// Aggregate cancer maps before thresholding.
    pub aggregate_cancer: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            colormap: Colormap::Heat,
            cancer_threshold: 0.6,
            til_threshold: 0.5,
            aggregate_cancer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("atlas-data"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub n_resamples: usize,
    pub level: f64,
    pub max_retries: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            n_resamples: d.n_resamples,
            level: d.level,
            max_retries: d.max_retries,
        }
    }
}

impl BootstrapSection {
    pub fn with_seed(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.n_resamples,
            level: self.level,
            seed,
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationSection {
    pub window_w: usize,
    pub func: AggregationFunc,
}

impl Default for AggregationSection {
    fn default() -> Self {
        let d = AggregationConfig::default();
        Self {
            window_w: d.window_w,
            func: d.func,
        }
    }
}

impl AggregationSection {
    pub fn get(&self) -> Result<AggregationConfig> {
        Ok(AggregationConfig::new(self.window_w, self.func)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub neg_pos_ratio: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { neg_pos_ratio: 2.34 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub aggregation: AggregationSection,
    pub tissue: TissueConfig,
    pub render: RenderConfig,
    pub server: ServerConfig,
    pub bootstrap: BootstrapSection,
    pub sampling: SamplingConfig,
    pub transform: TransformConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| AtlasError::BadRequest(format!("config: {e}")))?;
        cfg.aggregation.get()?;
        cfg.transform.validate()?;
        for (name, t) in [
            ("render.cancer_threshold", cfg.render.cancer_threshold),
            ("render.til_threshold", cfg.render.til_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(AtlasError::BadRequest(format!("config: {name} = {t} outside [0, 1]")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
        let d = Config::default();
        assert_eq!(d.aggregation.get().unwrap(), AggregationConfig::new(4, AggregationFunc::Max).unwrap());
        assert_eq!(d.render.cancer_threshold, 0.6);
    }

    #[test]
    fn partial_sections() {
        let c = Config::from_toml(
            "[aggregation]\nfunc = \"median\"\n[render]\ncolormap = \"grayscale\"\n[server]\nport = 9000\n",
        )
        .unwrap();
        assert_eq!(c.aggregation.window_w, 4);
        assert_eq!(c.aggregation.func, AggregationFunc::Median);
        assert_eq!(c.render.colormap, Colormap::Grayscale);
        assert_eq!(c.render.til_threshold, 0.5);
        assert_eq!(c.server.port, 9000);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[aggregation]\nwindow_w = 0\n").is_err());
        assert!(Config::from_toml("[render]\ncancer_threshold = 1.5\n").is_err());
        assert!(Config::from_toml("[render]\nbogus = 1\n").is_err());
    }
}
