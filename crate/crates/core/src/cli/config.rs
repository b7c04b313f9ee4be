//! Run configuration file (TOML). Every section and key is optional; unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depthopt::OptimizerConfig;
use crate::error::{Error, Result};
use crate::eval::{Crop, DEFAULT_CAP};
use crate::gdc::GdcConfig;
use crate::losses::LossConfig;
use crate::pdr::DEFAULT_RADIUS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdrSection {
    /// Disc radius in pixels for a 640 px wide image; scaled with the width.
    pub radius_at_640: f64,
    /// Beams kept from the scan; 0 keeps all.
    pub keep_beams: usize,
}

impl Default for PdrSection {
    fn default() -> Self {
        Self {
            radius_at_640: DEFAULT_RADIUS,
            keep_beams: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub cap: f64,
    pub crop: Crop,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            crop: Crop::Eigen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Texture seed of the bundled synthetic scene.
    pub seed: u64,
    pub loss: LossConfig,
    pub pdr: PdrSection,
    pub gdc: GdcConfig,
    pub optimizer: OptimizerConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: crate::dataio::SceneSpec::textured_plane().texture.seed,
            loss: LossConfig::default(),
            pdr: PdrSection::default(),
            gdc: GdcConfig::default(),
            optimizer: OptimizerConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        if !(self.pdr.radius_at_640 > 0.0) {
            return Err(Error::param("pdr.radius_at_640 must be positive"));
        }
        if !(self.eval.cap > 0.0) {
            return Err(Error::param("eval.cap must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }
}
